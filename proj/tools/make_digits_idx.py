#!/usr/bin/env python3
"""Regenerates the bundled handwritten-digits IDX fixtures under data/.

Uses the scikit-learn digits set (1797 8x8 images, intensities 0..16),
rescales intensities to bytes, and writes MNIST-format IDX files with a
deterministic 4:1 train/test split (every fifth sample goes to the test
split). The output is byte-stable, so regenerating should never produce a
diff unless scikit-learn changes the underlying data.
"""

import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def write_images(path: Path, images: np.ndarray) -> None:
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path: Path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data")
    out_dir.mkdir(parents=True, exist_ok=True)

    digits = load_digits()
    images = np.rint(digits.images * 255.0 / 16.0).astype(np.uint8)
    labels = digits.target.astype(np.uint8)

    idx = np.arange(len(labels))
    test_mask = (idx % 5) == 4
    splits = {
        "train": ~test_mask,
        "test": test_mask,
    }
    for split, mask in splits.items():
        write_images(out_dir / f"digits-{split}-images.idx3-ubyte", images[mask])
        write_labels(out_dir / f"digits-{split}-labels.idx1-ubyte", labels[mask])
        print(f"{split}: {mask.sum()} samples")
    return 0


if __name__ == "__main__":
    sys.exit(main())
