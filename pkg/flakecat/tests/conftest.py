import os
import shutil

import matplotlib
import numpy as np
import pytest

matplotlib.use('Agg')

SHA = '0123456789abcdef0123456789abcdef01234567'
URL = 'https://github.com/example/project'


def make_blobs(n_per_class, n_classes, dim, sep=8.0, scale=1.0, seed=10):
    """Isotropic Gaussian blobs centred at ``sep`` times the first unit vectors."""
    prng = np.random.RandomState(seed)
    X, y = [], []
    for c in range(n_classes):
        centre = np.zeros(dim)
        centre[c % dim] = sep
        X.append(centre + scale * prng.randn(n_per_class, dim))
        y.append(np.full(n_per_class, c, dtype=int))
    return np.vstack(X), np.concatenate(y)


def write_manifest(path, test_ids, labels, sha=SHA, url=URL):
    """Write a minimal 4-column manifest; labels are category display names."""
    lines = ['project_url,sha,test_id,category']
    lines += ['{},{},{},{}'.format(url, sha, t, c) for t, c in zip(test_ids, labels)]
    path.write_text('\n'.join(lines) + '\n')
    return path


@pytest.fixture
def blobs():
    return make_blobs(30, 3, 4)


requires_git = pytest.mark.skipif(shutil.which('git') is None, reason='git is not installed')
requires_idoft = pytest.mark.skipif(
    'FLAKECAT_IDOFT_MANIFEST' not in os.environ,
    reason='set FLAKECAT_IDOFT_MANIFEST to the labelled IDoFT manifest to run',
)
