import numpy as np
import pytest

from gptexport.formats import write_pqtk, write_vocab

# small synthetic corpus: repeated phrases give the model something learnable
PHRASES = [
    "the cat sat on the mat. ",
    "a dog ran in the park. ",
    "night falls and stars shine. ",
]


@pytest.fixture
def char_data(tmp_path):
    """Tokenized synthetic corpus split into train/val, PQTK format."""
    text = "".join(PHRASES[i % 3] for i in range(400))
    chars = sorted(set(text))
    table = {c: i for i, c in enumerate(chars)}
    ids = np.array([table[c] for c in text], dtype=np.uint16)
    cut = int(0.9 * ids.size)
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    write_pqtk(data_dir / "train.bin", ids[:cut], len(chars))
    write_pqtk(data_dir / "val.bin", ids[cut:], len(chars))
    write_vocab(data_dir / "vocab.txt", chars)
    return data_dir, len(chars)
