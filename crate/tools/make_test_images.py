#!/usr/bin/env python3
"""Generate the benchmark images in data/.

The benchmark suite follows the intensity statistics of the classical
512x512 grayscale test images (lena, house, barbara, boat), which cannot be
redistributed here. Real photographs bundled with scikit-image are affinely
remapped to the classical images' first and second moments instead:

    lena.pgm    <- skimage camera          (mu 124.05, sigma 47.85)
    house.pgm   <- skimage astronaut, gray (mu 140.00, sigma 45.00)
    barbara.pgm <- skimage brick           (mu 116.00, sigma 55.00)
    boat.pgm    <- skimage moon            (mu 130.00, sigma 47.00)

The expected noisy-image PSNR of the mixed noise model depends only on
these moments (plus the Gaussian sigma), so benchmark bounds computed for
the classical images transfer to the stand-ins. Values are clamped to
[1, 254] so the clean images contain no pixels at the dynamic-range
extremes.
"""

import numpy as np
from skimage import data as skdata
from skimage.color import rgb2gray

TARGETS = [
    ("lena", lambda: skdata.camera().astype(np.float64), 124.05, 47.85),
    ("house", lambda: rgb2gray(skdata.astronaut()) * 255.0, 140.00, 45.00),
    ("barbara", lambda: skdata.brick().astype(np.float64), 116.00, 55.00),
    ("boat", lambda: skdata.moon().astype(np.float64), 130.00, 47.00),
]

LO, HI = 1.0, 254.0


def remap(src, mu_t, sd_t):
    a = sd_t / src.std()
    b = mu_t - a * src.mean()
    for _ in range(40):
        out = np.clip(np.rint(a * src + b), LO, HI)
        mu, sd = out.mean(), out.std()
        if abs(mu - mu_t) < 5e-3 and abs(sd - sd_t) < 5e-3:
            break
        a *= sd_t / sd
        b += mu_t - (a * src + b).clip(LO, HI).mean()
    return out.astype(np.uint8)


def save_pgm(path, img):
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def predicted_noisy_psnr(img, sigma, rate, kind):
    x = img.astype(np.float64)
    ex2 = (x ** 2).mean()
    einv2 = ((255.0 - x) ** 2).mean()
    if kind == "sp":
        impulse = 0.5 * (ex2 + einv2)
    else:
        impulse = ex2 - 255.0 * x.mean() + 255.0 ** 2 / 3.0
    mse = (1.0 - rate) * sigma ** 2 + rate * impulse
    return 10.0 * np.log10(255.0 ** 2 / mse)


def main():
    for name, loader, mu_t, sd_t in TARGETS:
        src = loader()
        assert src.shape == (512, 512), (name, src.shape)
        out = remap(src, mu_t, sd_t)
        save_pgm(f"data/{name}.pgm", out)
        print(
            f"{name:8s} mu {out.mean():7.3f} sd {out.std():7.3f} "
            f"min {out.min():3d} max {out.max():3d}"
        )
    lena = np.fromfile("data/lena.pgm", dtype=np.uint8)[-512 * 512:].reshape(512, 512)
    house = np.fromfile("data/house.pgm", dtype=np.uint8)[-512 * 512:].reshape(512, 512)
    print("predicted noisy PSNR:")
    print("  lena  sp 30%:", round(predicted_noisy_psnr(lena, 10, 0.30, "sp"), 3))
    print("  lena  sp 50%:", round(predicted_noisy_psnr(lena, 10, 0.50, "sp"), 3))
    print("  house rv 30%:", round(predicted_noisy_psnr(house, 10, 0.30, "rv"), 3))


if __name__ == "__main__":
    main()
