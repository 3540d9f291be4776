#!/usr/bin/env python3
"""Pooled features of Residual50 / Dense161 against torchvision on random weights.

    torchvision_forward.py POOLED_FEATURES_BINARY KIND WORK_DIR
"""

import os
import struct
import subprocess
import sys

import numpy as np
import torch
import torchvision.models as models

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "..", "tools"))
import convert_torchvision as cv  # noqa: E402


def write_tensor(path, a):
    with open(path, "wb") as f:
        f.write(struct.pack("<I", a.ndim))
        for d in a.shape:
            f.write(struct.pack("<Q", d))
        f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_tensor(path):
    data = open(path, "rb").read()
    (rank,) = struct.unpack_from("<I", data, 0)
    dims = struct.unpack_from("<%dQ" % rank, data, 4)
    return np.frombuffer(data, "<f8", offset=4 + 8 * rank).reshape(dims)


def main(binary, kind, work):
    os.makedirs(work, exist_ok=True)
    torch.manual_seed(3)
    net = models.resnet50(weights=None) if kind == "resnet50" else models.densenet161(weights=None)
    # Non-trivial running statistics so eval-mode batch norm is exercised.
    for m in net.modules():
        if isinstance(m, torch.nn.BatchNorm2d):
            m.running_mean.uniform_(-0.2, 0.2)
            m.running_var.uniform_(0.5, 1.5)
            m.weight.data.uniform_(0.5, 1.5)
            m.bias.data.uniform_(-0.2, 0.2)
    if kind == "resnet50":
        net.fc = torch.nn.Identity()
    else:
        net.classifier = torch.nn.Identity()
    net = net.double().eval()

    ckpt = os.path.join(work, kind + ".ckpt")
    with open(ckpt, "wb") as f:
        f.write(cv.encode(kind, cv.backbone_entries(net.state_dict())))

    x = torch.rand(2, 3, 64, 64, dtype=torch.float64, generator=torch.Generator().manual_seed(4))
    with torch.no_grad():
        want = net(x).numpy()
    inp, out = os.path.join(work, "input.bin"), os.path.join(work, "pooled.bin")
    write_tensor(inp, x.numpy())
    subprocess.run([binary, kind, ckpt, inp, out], check=True)
    got = read_tensor(out)
    if got.shape != want.shape:
        print(f"shape mismatch: {got.shape} vs {want.shape}")
        return 1
    err = np.max(np.abs(got - want)) / max(np.max(np.abs(want)), 1e-300)
    print(f"{kind}: pooled width {got.shape[1]}, max relative deviation {err:.3e}")
    return 0 if err < 1e-9 else 1


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
