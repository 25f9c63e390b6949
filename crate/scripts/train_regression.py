#!/usr/bin/env python3
"""Produce the frozen regression workload under assets/regression/.

The workload is a 100-32-10 feedforward network, trained with
binarization-aware (straight-through estimator) gradient descent so that
only weight *signs* matter — which is all the simulator's binary
conductance mapping reads. The forward pass used for training mirrors the
simulator's ideal (parasitics-off) electrical behavior:

  * inputs in [0, 1] are encoded affinely onto the voltage rails,
  * each column's differential inputs are the loaded weighted averages of
    the driver voltages (device conductances include the access
    resistance; the neuron front-end loads the column with r_in to the
    mid-rail),
  * the neuron applies the saturating sigmoid transfer,
  * hidden outputs are attenuated by the resistive divider formed by the
    neuron output resistance and the next stage's input conductance.

Dataset: the scikit-learn handwritten digits (8x8, 0..16 grayscale, real
handwriting), each image embedded centered on a 28x28 zero canvas. The
exported CSV keeps all 784 canvas features; the simulator's center-crop
resize reduces them to the 10x10 window that the network was trained on.

Outputs (relative to --out):
  config.cfg             simulator configuration for the workload
  weights/manifest.json  layer manifest
  weights/w1.csv b1.csv w2.csv b2.csv   weight/bias signs (+-1)
  data/test200.csv       200 held-out samples, label + 784 features

The 200 test samples are never seen during training. Re-running the
script regenerates identical assets (fixed seeds, deterministic torch).

With --check PATH_TO_XBARSIM the script evaluates the exported assets in
the three reference configurations (ideal, partitioned parasitics,
unpartitioned parasitics) and verifies the expected accuracy ordering and
power trend.
"""

import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
import torch
from sklearn.datasets import load_digits

# Electrical constants, matching the simulator's defaults for the
# mram device preset and the 1t1r bitcell (see config.cfg written below).
R_LOW = 8.5e3
R_HIGH = 25.5e3
R_ACCESS = 5.0e3
R_IN = 1.0e3  # neuron front-end resistance to the mid rail
R_OUT = 100.0  # neuron output resistance
VDD = 0.8
VSS = -0.8
GAIN = 5.0

G_LOW = 1.0 / (R_LOW + R_ACCESS)
G_HIGH = 1.0 / (R_HIGH + R_ACCESS)
G_IN = 1.0 / R_IN
SWING = VDD - VSS
V_MID = 0.5 * (VDD + VSS)

CANVAS = 28  # exported image side
CROP = 10  # simulator center-crops to this side
HIDDEN = 32
CLASSES = 10
N_TEST = 200

SPLIT_SEED = 20250816
TORCH_SEED = 11


def build_canvas_dataset():
    """Digits embedded centered on a 28x28 canvas, pixels scaled to [0, 1]."""
    digits = load_digits()
    n = len(digits.images)
    canvas = np.zeros((n, CANVAS, CANVAS), dtype=np.float64)
    off = (CANVAS - 8) // 2
    canvas[:, off : off + 8, off : off + 8] = digits.images / 16.0
    return canvas, digits.target.astype(np.int64)


def stratified_split(labels, n_test, seed):
    """Indices of a test set with n_test/10 samples per class, rest train."""
    rng = np.random.default_rng(seed)
    test_idx = []
    for cls in range(CLASSES):
        members = np.flatnonzero(labels == cls)
        rng.shuffle(members)
        test_idx.extend(members[: n_test // CLASSES])
    test_idx = np.sort(np.array(test_idx))
    mask = np.ones(len(labels), dtype=bool)
    mask[test_idx] = False
    return np.flatnonzero(mask), test_idx


def center_crop(images, side):
    off = (images.shape[1] - side) // 2
    return images[:, off : off + side, off : off + side]


def sign_ste(w):
    """Sign with w >= 0 -> +1 (the binary mapping's convention) and a
    straight-through gradient."""
    s = torch.where(w >= 0, 1.0, -1.0)
    return s.detach() + w - w.detach()


def layer_response(v_ext, signs):
    """Differential front-end voltage per column.

    v_ext:  (batch, n_in + 1) driver voltages, bias rail first.
    signs:  (n_out, n_in + 1) weight signs, bias column first.
    Returns (batch, n_out) neuron input u relative to the mid rail.
    """
    g_pos = 0.5 * (G_LOW + G_HIGH) + signs * 0.5 * (G_LOW - G_HIGH)
    g_neg = 0.5 * (G_LOW + G_HIGH) - signs * 0.5 * (G_LOW - G_HIGH)
    v_pos = (v_ext @ g_pos.T + G_IN * V_MID) / (g_pos.sum(dim=1) + G_IN)
    v_neg = (v_ext @ g_neg.T + G_IN * V_MID) / (g_neg.sum(dim=1) + G_IN)
    return v_pos - v_neg


def neuron(u):
    k = 4.0 * GAIN / SWING
    return VSS + SWING * torch.sigmoid(k * u)


class AnalogNet(torch.nn.Module):
    """Latent real weights; forward uses their signs only."""

    def __init__(self):
        super().__init__()
        init = lambda *shape: torch.nn.Parameter(0.1 * torch.randn(*shape))
        self.w1 = init(HIDDEN, CROP * CROP)
        self.b1 = init(HIDDEN)
        self.w2 = init(CLASSES, HIDDEN)
        self.b2 = init(CLASSES)

    @staticmethod
    def with_bias(bias, weights):
        return torch.cat([bias.unsqueeze(1), weights], dim=1)

    def forward(self, x):
        batch = x.shape[0]
        rail = torch.full((batch, 1), float(VDD), dtype=x.dtype)
        v_in = VSS + (VDD - VSS) * x
        s1 = sign_ste(self.with_bias(self.b1, self.w1))
        u1 = layer_response(torch.cat([rail, v_in], dim=1), s1)
        h = neuron(u1)
        # Output-stage loading by the next crossbar: resistive divider
        # between r_out and the stage's total input conductance.
        alpha = (1.0 / R_OUT) / (1.0 / R_OUT + CLASSES * (G_LOW + G_HIGH))
        h = V_MID + alpha * (h - V_MID)
        s2 = sign_ste(self.with_bias(self.b2, self.w2))
        return layer_response(torch.cat([rail, h], dim=1), s2)

    def clamp_latent(self):
        for p in self.parameters():
            p.data.clamp_(-1.0, 1.0)


def train(x_train, y_train, x_val, y_val, epochs, lr, temperature):
    torch.manual_seed(TORCH_SEED)
    torch.use_deterministic_algorithms(True)
    model = AnalogNet()
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    xt = torch.tensor(x_train, dtype=torch.float64)
    yt = torch.tensor(y_train)
    xv = torch.tensor(x_val, dtype=torch.float64)
    model.double()

    best_state, best_acc = None, -1.0
    for epoch in range(epochs):
        model.train()
        perm = torch.randperm(len(xt))
        for start in range(0, len(xt), 128):
            idx = perm[start : start + 128]
            u = model(xt[idx])
            loss = torch.nn.functional.cross_entropy(u / temperature, yt[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            model.clamp_latent()
        model.eval()
        with torch.no_grad():
            val_acc = (model(xv).argmax(dim=1).numpy() == y_val).mean()
            if val_acc > best_acc:
                best_acc = val_acc
                best_state = {k: v.clone() for k, v in model.state_dict().items()}
        if (epoch + 1) % 20 == 0:
            with torch.no_grad():
                train_acc = (model(xt).argmax(dim=1).numpy() == y_train).mean()
            print(
                f"epoch {epoch + 1:3d}  loss {loss.item():.4f}"
                f"  train {train_acc:.3f}  held-out {val_acc:.3f}"
            )
    model.load_state_dict(best_state)
    return model, best_acc


def export_signs(tensor):
    return np.where(tensor.detach().numpy() >= 0, 1, -1)


def write_weight_csv(path, matrix):
    rows = [", ".join(str(int(v)) for v in row) for row in np.atleast_2d(matrix)]
    path.write_text("\n".join(rows) + "\n")


def write_dataset_csv(path, images, labels):
    lines = []
    for img, label in zip(images, labels):
        feats = ",".join(format(v, ".6g") for v in img.reshape(-1))
        lines.append(f"{label},{feats}")
    path.write_text("\n".join(lines) + "\n")


CONFIG_TEXT = """\
# Frozen regression workload: 100-32-10 network, mram devices, trained
# weight signs checked in under weights/. The dataset holds 28x28 images;
# sim.resize = crop reduces them to the 10x10 center window.
topology = [100, 32, 10]

device.name = mram
bitcell.kind = 1t1r
bitcell.access_resistance = 5e3
# Tall cell: the access device is routed along the column, so the column
# pitch (and with it the shared column wire) dominates the wire budget.
bitcell.width = 405e-9

# Narrow upper-level metal: resistivity scaling makes wire IR drop a
# first-order effect on the unpartitioned 101x32 stage.
interconnect.rho = 1.72e-8
interconnect.width = {width}
interconnect.thickness = 22e-9
interconnect.h = 20e-9
interconnect.epsilon_r = 20

neuron.kind = sigmoid
neuron.gain = 5
# Stiff current sensing: restored column currents after partitioning show
# up as delivered power, not just as recovered accuracy.
neuron.r_in = 1e3
neuron.r_out = 100

sim.weight_scheme = binary
sim.parasitics = true
sim.resize = crop
sim.seed = 7
sim.batch_size = 50
"""


def write_assets(out_dir, model, test_images, test_labels, wire_width):
    out_dir.mkdir(parents=True, exist_ok=True)
    weights_dir = out_dir / "weights"
    data_dir = out_dir / "data"
    weights_dir.mkdir(exist_ok=True)
    data_dir.mkdir(exist_ok=True)

    write_weight_csv(weights_dir / "w1.csv", export_signs(model.w1))
    write_weight_csv(weights_dir / "b1.csv", export_signs(model.b1).reshape(-1, 1))
    write_weight_csv(weights_dir / "w2.csv", export_signs(model.w2))
    write_weight_csv(weights_dir / "b2.csv", export_signs(model.b2).reshape(-1, 1))
    manifest = {
        "layers": [
            {"weights": "w1.csv", "bias": "b1.csv"},
            {"weights": "w2.csv", "bias": "b2.csv"},
        ]
    }
    (weights_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    write_dataset_csv(data_dir / "test200.csv", test_images, test_labels)
    (out_dir / "config.cfg").write_text(CONFIG_TEXT.format(width=wire_width))


def run_eval(binary, out_dir, overrides):
    """Evaluate the exported assets; returns (accuracy, average_power)."""
    with tempfile.TemporaryDirectory() as tmp:
        cmd = [
            binary, "eval",
            "--config", str(out_dir / "config.cfg"),
            "--weights", str(out_dir / "weights" / "manifest.json"),
            "--dataset", str(out_dir / "data" / "test200.csv"),
            "--out-dir", tmp, "--quiet",
        ]
        for pair in overrides:
            cmd += ["--set", pair]
        subprocess.run(cmd, check=True, capture_output=True, text=True)
        report = json.loads((Path(tmp) / "report.json").read_text())
    return 1.0 - report["error_rate"], report["average_power"]


def check_trends(binary, out_dir):
    ideal = run_eval(binary, out_dir, ["sim.parasitics=false"])
    partitioned = run_eval(binary, out_dir, ["partitions.subarray=[32]"])
    unpartitioned = run_eval(binary, out_dir, [])
    print(f"ideal (no parasitics)      accuracy {ideal[0]:.3f}")
    print(f"parasitics + subarray 32   accuracy {partitioned[0]:.3f}  power {partitioned[1]:.4e} W")
    print(f"parasitics, unpartitioned  accuracy {unpartitioned[0]:.3f}  power {unpartitioned[1]:.4e} W")
    ok = (
        ideal[0] >= partitioned[0]
        and partitioned[0] >= unpartitioned[0] + 0.05
        and partitioned[1] >= unpartitioned[1]
    )
    print("trend check:", "ok" if ok else "VIOLATED")
    return ok


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("assets/regression"))
    parser.add_argument("--epochs", type=int, default=120)
    parser.add_argument("--lr", type=float, default=0.01)
    parser.add_argument("--temperature", type=float, default=0.02)
    parser.add_argument("--wire-width", type=float, default=18e-9)
    parser.add_argument("--check", metavar="XBARSIM", help="evaluate exported assets with this binary")
    args = parser.parse_args()

    canvas, labels = build_canvas_dataset()
    train_idx, test_idx = stratified_split(labels, N_TEST, SPLIT_SEED)
    cropped = center_crop(canvas, CROP).reshape(len(canvas), -1)

    model, held_out = train(
        cropped[train_idx], labels[train_idx],
        cropped[test_idx], labels[test_idx],
        args.epochs, args.lr, args.temperature,
    )
    print(f"best held-out accuracy (training forward): {held_out:.3f}")

    write_assets(args.out, model, canvas[test_idx], labels[test_idx], args.wire_width)
    print(f"assets written to {args.out}")

    if args.check and not check_trends(args.check, args.out):
        sys.exit(1)


if __name__ == "__main__":
    main()
