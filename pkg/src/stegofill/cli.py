"""Command-line surface.

Keys are taken from --key (or --encode-key/--decode-key) flags, falling back
to the STEGOFILL_KEY / STEGOFILL_ENCODE_KEY / STEGOFILL_DECODE_KEY
environment variables so they need not land in shell history. Exit status:
0 success, 2 validation problem (bad arguments, corrupt container, shape
mismatch), 1 unexpected runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import datapipe, modelsteg, trainer
from .container import ContainerError, load_container, save_container
from .keymat import trigger
from .metrics import CSV_HEADER, evaluate_pair
from .network import forward_decode, forward_denoise, forward_encode


def _key_from(args: argparse.Namespace, attr: str, env: str, required: bool = True) -> str | None:
    key = getattr(args, attr, None) or os.environ.get(env)
    if key is None and required:
        raise SystemExit2(f"no key given: pass --{attr.replace('_', '-')} or set ${env}")
    return key


class SystemExit2(ValueError):
    """Validation failure that should exit with status 2."""


def _cmd_train(args) -> int:
    config = trainer.TrainConfig.from_file(args.config)
    enc = _key_from(args, "encode_key", "STEGOFILL_ENCODE_KEY")
    dec = _key_from(args, "decode_key", "STEGOFILL_DECODE_KEY")
    if enc == dec:
        raise SystemExit2("encoder and decoder keys must differ")
    config = replace(config, encode_key=enc, decode_key=dec)
    manifest = datapipe.index_dataset(args.data, split="train")
    container = trainer.train(
        config,
        manifest,
        log_path=args.log,
        checkpoint_every=args.checkpoint_every,
        checkpoint_dir=args.checkpoint_dir or Path(args.out).parent,
        progress_every=args.progress_every,
    )
    save_container(args.out, container)
    print(f"saved {args.out} digest {container.digest()}")
    return 0


def _cmd_denoise(args) -> int:
    container = load_container(args.container)
    params = trigger(container, None, "denoise")
    x = datapipe.load_image(args.image)
    y = forward_denoise(params, container.spec, x)
    datapipe.save_image(args.out, y)
    print(f"wrote {args.out}")
    return 0


def _cmd_embed(args) -> int:
    container = load_container(args.container)
    key = _key_from(args, "key", "STEGOFILL_KEY")
    params = trigger(container, key, "encode")
    cover = datapipe.load_image(args.cover)
    secret = datapipe.load_image(args.secret)
    if cover.shape != secret.shape:
        raise SystemExit2(
            f"cover {cover.shape[1:]} and secret {secret.shape[1:]} differ in size"
        )
    stego = forward_encode(params, container.spec, cover, secret)
    datapipe.save_image(args.out, stego)
    print(f"wrote {args.out}")
    return 0


def _cmd_recover(args) -> int:
    container = load_container(args.container)
    key = _key_from(args, "key", "STEGOFILL_KEY")
    params = trigger(container, key, "decode")
    stego = datapipe.load_image(args.stego)
    secret = forward_decode(params, container.spec, stego)
    datapipe.save_image(args.out, secret)
    print(f"wrote {args.out}")
    return 0


def _cmd_trigger(args) -> int:
    container = load_container(args.container)
    key = _key_from(args, "key", "STEGOFILL_KEY", required=args.mode != "denoise")
    params = trigger(container, key, args.mode)
    np.savez(args.out, **params.arrays)
    print(f"wrote {args.out}")
    print(f"digest {params.digest()}")
    return 0


def _cmd_eval(args) -> int:
    if len(args.images) % 2 != 0:
        raise SystemExit2("eval expects REFERENCE TEST file pairs")
    rows = [CSV_HEADER]
    for ref_path, test_path in zip(args.images[::2], args.images[1::2]):
        report = evaluate_pair(
            datapipe.load_image(ref_path), datapipe.load_image(test_path)
        )
        rows.append(report.csv_row(Path(test_path).name))
    text = "\n".join(rows)
    if args.csv:
        Path(args.csv).write_text(text + "\n")
    print(text)
    return 0


def _cmd_mask_info(args) -> int:
    container = load_container(args.container)
    m = container.mask
    print(f"ratio_S {m.ratio}")
    print(f"maskable_N {m.total}")
    print(f"kept_p {m.kept}")
    print(f"density {m.kept / m.total:.8f}")
    print(f"kept_magnitude_floor {m.threshold:.8g}")
    for info in container.store.kernel_infos():
        print(f"layer {info.name} size {info.size}")
    return 0


def _cmd_steg_emd(args) -> int:
    stores = [load_container(p).store for p in args.containers]
    m = modelsteg.emd_matrix(stores)
    names = [Path(p).name for p in args.containers]
    print("," + ",".join(names))
    for name, row in zip(names, m):
        print(name + "," + ",".join(f"{v:.8g}" for v in row))
    return 0


def _cmd_steg_leakage(args) -> int:
    container = load_container(args.container)
    key = _key_from(args, "encode_key", "STEGOFILL_ENCODE_KEY")
    manifest = datapipe.index_dataset(args.images, split="test")
    images = [datapipe.load_image(manifest.path_of(i)) for i in manifest.ids()]
    if len(images) < 2:
        raise SystemExit2("need at least two images (covers and secrets)")
    covers = np.stack(images[0::2][: len(images) // 2])
    secrets = np.stack(images[1::2][: len(covers)])
    enc = trigger(container, key, "encode")
    stegos = forward_encode(enc, container.spec, covers, secrets)
    stegos = datapipe.quantize(stegos.astype(np.float32))
    report = modelsteg.leakage_trials(
        container, args.trials, args.seed, covers, secrets, stegos
    )
    for row in report.csv_rows():
        print(row)
    print(report.summary())
    return 0


def _cmd_steg_gap(args) -> int:
    purified = load_container(args.purified)
    baseline = load_container(args.baseline)
    manifest = datapipe.index_dataset(args.images, split="test")
    rng = np.random.default_rng(args.seed)
    pairs = []
    for image_id in manifest.ids():
        clean = datapipe.load_image(manifest.path_of(image_id))
        pairs.append((clean, datapipe.add_gaussian_noise(clean, args.sigma, rng)))
    gap = modelsteg.performance_gap(purified, baseline, pairs)
    print(f"delta_psnr {gap.psnr:.6f}")
    print(f"delta_ssim {gap.ssim:.6f}")
    print(f"delta_apd {gap.apd:.6f}")
    print(f"delta_rmse {gap.rmse:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stegofill",
        description="Sparse denoiser that keys can turn into an image-hiding "
        "encoder or decoder, plus the model-steganalysis battery.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a purified container from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True, help="directory of training images")
    t.add_argument("--out", required=True, help="output container path")
    t.add_argument("--log", default=None, help="metrics log (iteration, losses, lr)")
    t.add_argument("--encode-key", default=None)
    t.add_argument("--decode-key", default=None)
    t.add_argument("--checkpoint-every", type=int, default=None)
    t.add_argument("--checkpoint-dir", default=None)
    t.add_argument("--progress-every", type=int, default=0)
    t.set_defaults(fn=_cmd_train)

    d = sub.add_parser("denoise", help="run the purified network on an image")
    d.add_argument("container")
    d.add_argument("image")
    d.add_argument("-o", "--out", required=True)
    d.set_defaults(fn=_cmd_denoise)

    e = sub.add_parser("embed", help="hide a secret image inside a cover image")
    e.add_argument("container")
    e.add_argument("cover")
    e.add_argument("secret")
    e.add_argument("-o", "--out", required=True)
    e.add_argument("--key", default=None)
    e.set_defaults(fn=_cmd_embed)

    r = sub.add_parser("recover", help="recover the secret image from a stego image")
    r.add_argument("container")
    r.add_argument("stego")
    r.add_argument("-o", "--out", required=True)
    r.add_argument("--key", default=None)
    r.set_defaults(fn=_cmd_recover)

    g = sub.add_parser("trigger", help="dump the dense key-filled weights")
    g.add_argument("container")
    g.add_argument("-o", "--out", required=True, help="output .npz path")
    g.add_argument("--key", default=None)
    g.add_argument("--mode", choices=["encode", "decode", "denoise"], required=True)
    g.set_defaults(fn=_cmd_trigger)

    v = sub.add_parser("eval", help="quality metrics over reference/test image pairs")
    v.add_argument("images", nargs="+", metavar="REF TEST")
    v.add_argument("--csv", default=None, help="also write rows to this file")
    v.set_defaults(fn=_cmd_eval)

    m = sub.add_parser("mask-info", help="density and magnitude summary of a container")
    m.add_argument("container")
    m.set_defaults(fn=_cmd_mask_info)

    s = sub.add_parser("steg-analyze", help="model-steganalysis reports")
    ssub = s.add_subparsers(dest="analysis", required=True)

    se = ssub.add_parser("emd", help="pairwise weight-distribution distances")
    se.add_argument("containers", nargs="+")
    se.set_defaults(fn=_cmd_steg_emd)

    sl = ssub.add_parser("leakage", help="random-key trigger trials")
    sl.add_argument("container")
    sl.add_argument("--images", required=True, help="directory of evaluation images")
    sl.add_argument("--trials", type=int, default=50)
    sl.add_argument("--seed", type=int, default=0)
    sl.add_argument("--encode-key", default=None, help="real key used to make the attacked stegos")
    sl.set_defaults(fn=_cmd_steg_leakage)

    sg = ssub.add_parser("gap", help="denoising gap between purified and baseline")
    sg.add_argument("purified")
    sg.add_argument("baseline")
    sg.add_argument("--images", required=True)
    sg.add_argument("--sigma", type=float, default=20.0)
    sg.add_argument("--seed", type=int, default=0)
    sg.set_defaults(fn=_cmd_steg_gap)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (SystemExit2, ContainerError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
