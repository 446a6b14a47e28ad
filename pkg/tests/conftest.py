import os

import pytest

from relpred import DatasetSplits, Vocabulary, build_vocabulary, index_triples

# Benchmark datasets are looked up under $KG_DATA_ROOT (default: ./data at the
# repo root), one directory per dataset with train.txt / valid.txt / test.txt.
DATA_ROOT = os.environ.get(
    "KG_DATA_ROOT", os.path.join(os.path.dirname(os.path.dirname(__file__)), "data")
)

TOY_TRAIN = [
    ("a", "r1", "b"),
    ("b", "r1", "c"),
    ("c", "r2", "d"),
    ("d", "r2", "e"),
    ("e", "r3", "f"),
    ("f", "r3", "g"),
    ("g", "r1", "h"),
    ("h", "r2", "a"),
    ("a", "r2", "c"),
    ("a", "r1", "c"),
]
TOY_VALID = [("a", "r1", "b"), ("c", "r2", "d")]
TOY_TEST = [("b", "r1", "c"), ("e", "r3", "f"), ("g", "r1", "h")]


def dataset_path(name: str) -> str:
    return os.path.join(DATA_ROOT, name)


def dataset_available(name: str) -> bool:
    path = dataset_path(name)
    return all(
        os.path.isfile(os.path.join(path, fname))
        for fname in ("train.txt", "valid.txt", "test.txt")
    )


def require_dataset(name: str) -> str:
    if not dataset_available(name):
        pytest.skip(f"dataset {name} not found under {DATA_ROOT} (set KG_DATA_ROOT)")
    return dataset_path(name)


def make_toy_splits() -> DatasetSplits:
    vocab = build_vocabulary(TOY_TRAIN)
    train, _ = index_triples(TOY_TRAIN, vocab, "error", "train")
    valid, skipped_valid = index_triples(TOY_VALID, vocab, "skip", "valid")
    test, skipped_test = index_triples(TOY_TEST, vocab, "skip", "test")
    return DatasetSplits(
        train=train,
        valid=valid,
        test=test,
        vocab=vocab,
        skipped_valid=skipped_valid,
        skipped_test=skipped_test,
        name="toy",
    )


@pytest.fixture
def toy_splits() -> DatasetSplits:
    return make_toy_splits()


@pytest.fixture
def toy_vocab() -> Vocabulary:
    return build_vocabulary(TOY_TRAIN)


def write_dataset(dirpath, train, valid, test) -> None:
    os.makedirs(dirpath, exist_ok=True)
    for fname, triples in (("train.txt", train), ("valid.txt", valid), ("test.txt", test)):
        with open(os.path.join(dirpath, fname), "w", encoding="utf-8") as f:
            for s, r, o in triples:
                f.write(f"{s}\t{r}\t{o}\n")


@pytest.fixture
def toy_dataset_dir(tmp_path) -> str:
    path = tmp_path / "toyds"
    write_dataset(path, TOY_TRAIN, TOY_VALID, TOY_TEST)
    return str(path)
