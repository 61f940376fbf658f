import os

import numpy as np
import pytest

from flakecat.corpus import CategoryLabel, class_distribution, load_manifest
from flakecat.harness import ExperimentConfig, knn_structure_analysis, load_features
from flakecat.reduce import reduce_matrix
from flakecat.tests.conftest import requires_idoft

requires_flattened = pytest.mark.skipif(
    'FLAKECAT_IDOFT_FLATTENED' not in os.environ,
    reason='set FLAKECAT_IDOFT_FLATTENED to the flattened IDoFT tests to run',
)


@requires_idoft
class TestIDoFT:

    @pytest.fixture(autouse=True)
    def setup(self):
        self.corpus = load_manifest(os.environ['FLAKECAT_IDOFT_MANIFEST'])

    def test_snapshot_distribution(self):
        assert len(self.corpus) == 1257
        counts = class_distribution(self.corpus)
        assert counts == {
            CategoryLabel.ID: 589,
            CategoryLabel.OD: 307,
            CategoryLabel.OD_VIC: 133,
            CategoryLabel.OD_BRIT: 15,
            CategoryLabel.NOD: 109,
            CategoryLabel.NDOD: 11,
            CategoryLabel.UD: 93,
        }

    @requires_flattened
    def test_knn_on_reduced_tfidf(self):
        config = ExperimentConfig.from_dict({
            'embedding': {'source': 'tfidf', 'path': os.environ['FLAKECAT_IDOFT_FLATTENED']},
        })
        X = load_features(config, self.corpus)
        y = self.corpus.labels
        reduced = {
            'lda': reduce_matrix('lda', X, y, r=6),
            'pca': reduce_matrix('pca', X, r=6),
        }
        table = knn_structure_analysis(reduced, y, k_values=[2, 10, 200], folds=10)

        expected = np.array([0.53, 0.55, 0.60])
        assert np.all(np.abs(table['lda'].to_numpy() - expected) <= 0.12)
        assert np.all(table['lda'].to_numpy() > table['pca'].to_numpy())
