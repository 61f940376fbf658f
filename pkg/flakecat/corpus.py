"""
Labelled flaky-test manifests and the local cache of test sources.

A manifest is a CSV file with (at least) the columns
``project_url,sha,test_id,category``; further IDoFT columns are ignored.
Sources are fetched from the pinned commit with the system ``git`` and kept
under ``<cache_dir>/<sha>/<package path>/<ClassName>.java``.
"""

import csv
import enum
import logging
import os
import re
import subprocess
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .errors import (
    AmbiguousSourceError, CacheMissError, FetchError, MalformedRowError,
    UnknownCategoryError,
)

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ('project_url', 'sha', 'test_id', 'category')
IDOFT_COLUMNS = {
    'project url': 'project_url',
    'sha detected': 'sha',
    'fully-qualified test name (packagename.classname.methodname)': 'test_id',
}
SHA_RE = re.compile(r'^[0-9a-f]{40}$')
CACHE_ENV = 'FLAKECAT_CACHE'
DEFAULT_CACHE_DIR = Path('~/.cache/flakecat')


class CategoryLabel(enum.IntEnum):
    """The seven flakiness categories, with stable integer codes."""

    ID = 0
    OD = 1
    OD_VIC = 2
    OD_BRIT = 3
    NOD = 4
    NDOD = 5
    UD = 6

    @classmethod
    def parse(cls, text):
        """
        Parse a category string. Matching ignores case and treats ``-`` and
        ``_`` alike, so ``OD-Vic``, ``od_vic`` and ``OD_VIC`` are the same label.

        :param text: category name as written in a manifest
        :type text: str
        :raises KeyError: if the name is not a known category
        :return: the category
        :rtype: CategoryLabel
        """
        key = text.strip().upper().replace('-', '_').replace(' ', '_')
        key = _ALIASES.get(key, key)
        return cls[key]

    @property
    def display_name(self):
        return _DISPLAY_NAMES[self]


_ALIASES = {'ND': 'NOD', 'ND_OD': 'NDOD', 'NOD_OD': 'NDOD'}
_DISPLAY_NAMES = {
    CategoryLabel.ID: 'ID',
    CategoryLabel.OD: 'OD',
    CategoryLabel.OD_VIC: 'OD-Vic',
    CategoryLabel.OD_BRIT: 'OD-Brit',
    CategoryLabel.NOD: 'NOD',
    CategoryLabel.NDOD: 'NDOD',
    CategoryLabel.UD: 'UD',
}
N_CATEGORIES = len(CategoryLabel)


@dataclass(frozen=True)
class TestRecord:
    """One labelled flaky test: where it lives and which category it belongs to."""

    __test__ = False  # not a pytest test class

    project_url: str
    sha: str
    test_id: str
    label: CategoryLabel

    def __post_init__(self):
        if not self.project_url:
            raise ValueError('project_url must be non-empty')
        if not SHA_RE.match(self.sha):
            raise ValueError('sha must be 40 lowercase hex characters, got {!r}'.format(self.sha))
        if self.test_id.count('.') < 2:
            raise ValueError('test_id must be fully qualified (pkg.Class.method), got {!r}'.format(self.test_id))

    @property
    def method_name(self):
        # parameterised runs are reported as method[0], method[foo]
        return self.test_id.rsplit('.', 1)[1].split('[', 1)[0]

    @property
    def class_name(self):
        # nested classes live in the file of their outermost class
        return self.test_id.rsplit('.', 2)[1].split('$', 1)[0]

    @property
    def package(self):
        return self.test_id.rsplit('.', 2)[0]

    @property
    def relative_path(self):
        """Path of the test file derived from the package, e.g. ``org/foo/BarTest.java``."""
        return Path(*self.package.split('.')) / '{}.java'.format(self.class_name)

    @property
    def key(self):
        return (self.project_url, self.sha, self.test_id)


@dataclass
class Corpus:
    """Ordered collection of test records plus the source cache they resolve to."""

    records: list = field(default_factory=list)
    cache_dir: Path = None

    def __post_init__(self):
        self.cache_dir = resolve_cache_dir(self.cache_dir)
        seen = set()
        for record in self.records:
            if record.key in seen:
                raise ValueError('duplicate record {}'.format(record.key))
            seen.add(record.key)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    @property
    def labels(self):
        """Array of category codes in manifest order."""
        return np.array([int(r.label) for r in self.records], dtype=int)

    @property
    def test_ids(self):
        return [r.test_id for r in self.records]


def resolve_cache_dir(cache_dir=None):
    """
    Pick the cache directory: an explicit argument wins, then the
    ``FLAKECAT_CACHE`` environment variable, then ``~/.cache/flakecat``.

    :param cache_dir: explicit cache directory, defaults to None
    :type cache_dir: str or Path, optional
    :return: the resolved directory (not created)
    :rtype: Path
    """
    if cache_dir is None:
        cache_dir = os.environ.get(CACHE_ENV) or DEFAULT_CACHE_DIR
    return Path(cache_dir).expanduser()


def load_manifest(path, cache_dir=None, skip_unknown=False):
    """
    Read a manifest CSV. The header must contain the columns
    ``project_url, sha, test_id, category`` in any order; other columns are
    ignored. The column titles of the IDoFT ``pr-data.csv`` (``Project URL``,
    ``SHA Detected``, ``Fully-Qualified Test Name ...``, ``Category``) are
    accepted as well. Blank lines are skipped; line numbers count the header
    as line 1.

    :param path: manifest file
    :type path: str or Path
    :param cache_dir: cache directory for the resulting corpus, defaults to None
    :type cache_dir: str or Path, optional
    :param skip_unknown: log and drop rows whose category is not one of the seven
        labels (e.g. combined ``ID;OD`` rows), defaults to False
    :type skip_unknown: bool, optional
    :raises MalformedRowError: on a wrong column count, a bad sha or test id, or a duplicate row
    :raises UnknownCategoryError: on a category name that is not one of the seven labels
    :return: the corpus, records in file order
    :rtype: Corpus
    """
    records = []
    seen = set()
    skipped = 0
    with open(path, newline='', encoding='utf-8-sig') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise MalformedRowError(1, 'missing header')
        header = [_column_name(h) for h in header]
        missing = [c for c in MANIFEST_COLUMNS if c not in header]
        if missing:
            raise MalformedRowError(1, 'missing columns {}'.format(missing))
        cols = {c: header.index(c) for c in MANIFEST_COLUMNS}

        for row in reader:
            line_no = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise MalformedRowError(line_no, 'expected {} columns, got {}'.format(len(header), len(row)))
            url, sha, test_id, category = (row[cols[c]].strip() for c in MANIFEST_COLUMNS)
            if not SHA_RE.match(sha):
                raise MalformedRowError(line_no, 'bad sha {!r}'.format(sha))
            try:
                label = CategoryLabel.parse(category)
            except KeyError:
                if not skip_unknown:
                    raise UnknownCategoryError(line_no, category) from None
                skipped += 1
                continue
            try:
                record = TestRecord(url, sha, test_id, label)
            except ValueError as e:
                raise MalformedRowError(line_no, str(e)) from None
            if record.key in seen:
                raise MalformedRowError(line_no, 'duplicate test {}'.format(test_id))
            seen.add(record.key)
            records.append(record)

    if skipped:
        logger.warning('skipped %d rows with an unknown category in %s', skipped, path)
    logger.debug('loaded %d records from %s', len(records), path)
    return Corpus(records, cache_dir)


def _column_name(title):
    key = title.strip().lower()
    return IDOFT_COLUMNS.get(key, key)


def save_manifest(corpus, path):
    """
    Write a corpus as a 4-column manifest that :func:`load_manifest` reads back.

    :param corpus: the corpus
    :type corpus: Corpus
    :param path: output file
    :type path: str or Path
    """
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(MANIFEST_COLUMNS)
        for r in corpus:
            writer.writerow([r.project_url, r.sha, r.test_id, r.label.display_name])


def class_distribution(corpus):
    """
    Count records per category. Every category is present in the result.

    :param corpus: the corpus
    :type corpus: Corpus
    :return: mapping of CategoryLabel to count
    :rtype: dict
    """
    counts = Counter(r.label for r in corpus)
    return {label: counts.get(label, 0) for label in CategoryLabel}


# ---------------------------------------------------------------------------- #
#                                Source fetching                               #
# ---------------------------------------------------------------------------- #


def cache_path(record, cache_dir):
    """Location of the cached source of ``record``."""
    return resolve_cache_dir(cache_dir) / record.sha / record.relative_path


def fetch_source(record, cache_dir=None, offline=False):
    """
    Return the Java file that contains the test class of ``record``.

    A cached copy is returned without touching git. Otherwise the pinned
    commit is fetched shallowly into a scratch repository, the file is
    located (``<ClassName>.java``; when several match, the one whose path
    ends with the package directories), checked out, and written to the
    cache atomically.

    :param record: the test record
    :type record: TestRecord
    :param cache_dir: cache directory, defaults to the resolved default
    :type cache_dir: str or Path, optional
    :param offline: never run git, defaults to False
    :type offline: bool, optional
    :raises CacheMissError: if offline and the file is not cached
    :raises FetchError: if git fails or the file is not in the commit
    :raises AmbiguousSourceError: if several files match equally well
    :return: the file content
    :rtype: str
    """
    target = cache_path(record, cache_dir)
    if target.is_file():
        return target.read_bytes().decode('utf-8')
    if offline:
        raise CacheMissError('{} is not cached at {}'.format(record.test_id, target))

    with tempfile.TemporaryDirectory(prefix='flakecat-') as scratch:
        _git(scratch, 'init', '--quiet')
        _git(scratch, 'fetch', '--quiet', '--depth', '1', record.project_url, record.sha)
        listing = _git(scratch, 'ls-tree', '-r', '--name-only', record.sha)
        path = _locate_test_file(listing.splitlines(), record)
        _git(scratch, 'checkout', '--quiet', record.sha, '--', path)
        content = (Path(scratch) / path).read_bytes()

    _atomic_write(target, content)
    logger.debug('cached %s from %s', record.test_id, path)
    return content.decode('utf-8')


def fetch_corpus(corpus, offline=False, n_jobs=1):
    """
    Fetch the sources of every record. Distinct records are fetched
    concurrently on threads.

    :param corpus: the corpus
    :type corpus: Corpus
    :param offline: use the cache only, defaults to False
    :type offline: bool, optional
    :param n_jobs: number of concurrent fetches, defaults to 1
    :type n_jobs: int, optional
    :return: mapping test_id -> source text, in manifest order
    :rtype: dict
    """
    sources = Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(fetch_source)(r, corpus.cache_dir, offline) for r in corpus
    )
    return dict(zip(corpus.test_ids, sources))


def _git(cwd, *args):
    try:
        proc = subprocess.run(['git', *args], cwd=cwd, capture_output=True, text=True, check=True)
    except FileNotFoundError as e:
        raise FetchError('git executable not found') from e
    except subprocess.CalledProcessError as e:
        raise FetchError('git {} exited with {}: {}'.format(args[0], e.returncode, e.stderr.strip())) from e
    return proc.stdout


def _locate_test_file(paths, record):
    name = '{}.java'.format(record.class_name)
    candidates = [p for p in paths if p == name or p.endswith('/' + name)]
    if not candidates:
        raise FetchError('{} not found in {}@{}'.format(name, record.project_url, record.sha))
    if len(candidates) == 1:
        return candidates[0]
    suffix = record.relative_path.as_posix()
    exact = [p for p in candidates if p == suffix or p.endswith('/' + suffix)]
    if len(exact) == 1:
        return exact[0]
    raise AmbiguousSourceError('{} matches {} files: {}'.format(record.test_id, len(candidates), candidates))


def _atomic_write(target, content):
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix='.tmp-', suffix='.java')
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(content)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
