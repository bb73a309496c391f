"""Export scikit-learn's 8x8 digits as IDX files for desk-scale runs.

    python3 scripts/make_digits_idx.py OUT_DIR

Pixel intensities 0..16 are rescaled to bytes with round(v * 255 / 16).
"""
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

from uae.data_io import write_idx_images, write_idx_labels


def export(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    images = np.round(digits.images * 255.0 / 16.0).astype(np.uint8)
    write_idx_images(out / "digits-images.idx", images)
    write_idx_labels(out / "digits-labels.idx", digits.target)
    return out / "digits-images.idx", out / "digits-labels.idx"


if __name__ == "__main__":
    for p in export(sys.argv[1] if len(sys.argv) > 1 else "data"):
        print(p)
