# Copyright 2026 The Timbre Authors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Renders the CSVs written by `timbre attend` as heatmaps.

usage: plot_attention.py <work-dir>/attention/<stem> [out.png]
"""
import pathlib
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def load(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    stem = pathlib.Path(sys.argv[1])
    out = pathlib.Path(sys.argv[2]) if len(sys.argv) > 2 else stem.with_suffix(".png")
    heads = sorted(stem.parent.glob(stem.name + ".head*.csv"), key=lambda p: int(p.stem.rsplit("head", 1)[1]))
    avg = load(f"{stem}.avg.csv")
    act = load(f"{stem}.act.csv")

    cols = max(len(heads), 2)
    fig, axes = plt.subplots(2, cols, figsize=(2.2 * cols, 5), squeeze=False)
    for ax, path in zip(axes[0], heads):
        ax.imshow(load(path), cmap="magma", vmin=0)
        ax.set_title(path.stem.rsplit(".", 1)[1], fontsize=8)
        ax.axis("off")
    for ax in axes[0][len(heads):]:
        ax.axis("off")
    axes[1][0].imshow(avg, cmap="magma", vmin=0)
    axes[1][0].set_title("average (query x key)", fontsize=8)
    axes[1][1].imshow(act, cmap="viridis", origin="lower", aspect="auto")
    axes[1][1].set_title("activation (mel x frame)", fontsize=8)
    for ax in axes[1][2:]:
        ax.axis("off")
    fig.suptitle(stem.name, fontsize=9)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(out)


if __name__ == "__main__":
    main()
