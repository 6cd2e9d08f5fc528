#!/usr/bin/env python3
"""Regenerates the preprocessing golden fixtures in tests/data.

This is an independent float64 implementation of crop -> bilinear resize ->
local-mean enhancement, written with numpy only. The C++ pipeline is
compared against its output in the unit tests.
"""
import math
import pathlib
import sys

import numpy as np
from PIL import Image


def synthetic_fundus(h=150, w=200):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx, r = 72.0, 104.0, 61.0
    d = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    inside = d <= r
    img = np.zeros((h, w, 3))
    img[..., 0] = 150 + 60 * np.cos(xx / 17.0) * np.sin(yy / 23.0)
    img[..., 1] = 70 + 30 * (xx / w)
    img[..., 2] = 30 + 20 * (yy / h)
    # a few dark "vessels"
    for k in range(4):
        band = np.abs((yy - cy) - (k - 1.5) * 0.6 * (xx - cx)) < 1.5
        img[band] *= 0.55
    # bright optic disc
    disc = np.sqrt((yy - cy + 10) ** 2 + (xx - cx - 30) ** 2) < 9
    img[disc] = [250, 230, 180]
    img[~inside] = 0
    # faint sensor noise in the border, below the crop tolerance
    rng = np.random.default_rng(3)
    noise = rng.integers(0, 5, size=(h, w, 3))
    img[~inside] = noise[~inside]
    return np.floor(img + 0.5).clip(0, 255).astype(np.uint8)


def crop(img, tol):
    s = img.astype(np.int64).sum(axis=2)
    ys, xs = np.nonzero(s > 3 * tol)
    return img[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


def taps(n_in, n_out):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize(img, size):
    f = img.astype(np.float64)
    y0, y1, fy = taps(img.shape[0], size)
    x0, x1, fx = taps(img.shape[1], size)
    fx = fx[None, :, None]
    top = f[y0][:, x0] * (1 - fx) + f[y0][:, x1] * fx
    bot = f[y1][:, x0] * (1 - fx) + f[y1][:, x1] * fx
    out = top * (1 - fy[:, None, None]) + bot * fy[:, None, None]
    return np.floor(out + 0.5).clip(0, 255).astype(np.uint8)


def blur(img, sigma):
    r = int(math.floor(3 * sigma + 0.5))
    k = np.exp(-np.arange(-r, r + 1) ** 2 / (2 * sigma * sigma))
    k /= k.sum()
    f = img.astype(np.float64)
    p = np.pad(f, ((0, 0), (r, r), (0, 0)), mode="symmetric")
    h = sum(k[i] * p[:, i : i + f.shape[1]] for i in range(2 * r + 1))
    p = np.pad(h, ((r, r), (0, 0), (0, 0)), mode="symmetric")
    return sum(k[i] * p[i : i + f.shape[0]] for i in range(2 * r + 1))


def enhance(img, sigma, alpha, offset):
    g = blur(img, sigma)
    out = alpha * img.astype(np.float64) - alpha * g + offset
    return np.floor(out.clip(0, 255) + 0.5).astype(np.uint8)


def main(out_dir):
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw = synthetic_fundus()
    Image.fromarray(raw, "RGB").save(out / "fundus_input.png")
    c = crop(raw, 7)
    print("crop", c.shape)
    for size, sigma in [(512, 10.0), (96, 3.0)]:
        res = enhance(resize(c, size), sigma, 4.0, 128.0)
        Image.fromarray(res, "RGB").save(out / f"fundus_golden_{size}.png")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).resolve().parent.parent / "tests" / "data")
