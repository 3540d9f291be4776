#!/usr/bin/env python3
"""Convert torchvision ImageNet weights to fairvoice checkpoints.

    python tools/convert_torchvision.py resnet50 out/resnet50.ckpt
    python tools/convert_torchvision.py densenet161 out/densenet161.ckpt --state-dict densenet161.pth

Without --state-dict the weights are fetched through torchvision. Point
FAIRVOICE_PRETRAINED_DIR at the output directory afterwards.
"""

import argparse
import re
import struct
import sys

MAGIC = b"FVCK"
VERSION = 1
KINDS = {"resnet50": 1, "densenet161": 2}

# Older torchvision densenet files name layers "norm.1" instead of "norm1".
_LEGACY_DENSE = re.compile(r"^(.*denselayer\d+\.(?:norm|relu|conv))\.((?:[12])\.(?:weight|bias|running_mean|running_var))$")


def fnv1a(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def load_state_dict(kind, path):
    import torch

    if path:
        return torch.load(path, map_location="cpu")
    import torchvision.models as models

    if kind == "resnet50":
        return models.resnet50(weights=models.ResNet50_Weights.IMAGENET1K_V1).state_dict()
    return models.densenet161(weights=models.DenseNet161_Weights.IMAGENET1K_V1).state_dict()


def backbone_entries(state):
    out = []
    for name, tensor in state.items():
        if name.endswith("num_batches_tracked"):
            continue
        if name.startswith("fc.") or name.startswith("classifier."):
            continue
        m = _LEGACY_DENSE.match(name)
        if m:
            name = m.group(1) + m.group(2)
        out.append(("backbone." + name, tensor.detach().to("cpu").double().contiguous()))
    return out


def encode(kind, entries):
    body = bytearray(MAGIC)
    body += struct.pack("<IIQI", VERSION, KINDS[kind], 0, len(entries))
    for name, t in entries:
        raw = name.encode("utf-8")
        body += struct.pack("<I", len(raw)) + raw
        body += struct.pack("<I", t.dim())
        for d in t.shape:
            body += struct.pack("<Q", int(d))
        body += t.numpy().astype("<f8").tobytes()
    body += struct.pack("<Q", fnv1a(bytes(body)))
    return bytes(body)


def main(argv):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("kind", choices=sorted(KINDS))
    ap.add_argument("output")
    ap.add_argument("--state-dict", help="local .pth state_dict instead of the torchvision download")
    args = ap.parse_args(argv)
    entries = backbone_entries(load_state_dict(args.kind, args.state_dict))
    with open(args.output, "wb") as f:
        f.write(encode(args.kind, entries))
    print(f"wrote {len(entries)} entries to {args.output}")


if __name__ == "__main__":
    main(sys.argv[1:])
