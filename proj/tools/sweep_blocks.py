#!/usr/bin/env python3
# Copyright 2026 The rtlm Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Sweeps the LSTM block position of an R-TLM variant with the rtlm CLI.

Trains one model per block index and prints the validation perplexity of
each, so both readings of a block number (0-based or 1-based) can be
compared on the same data.
"""

import argparse
import os
import re
import subprocess
import sys
import tempfile


def run(cmd):
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        sys.stderr.write(proc.stdout + proc.stderr)
        raise SystemExit(f"command failed ({proc.returncode}): {' '.join(cmd)}")
    return proc.stdout


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rtlm", default="build/rtlm", help="path to the rtlm binary")
    ap.add_argument("--config", default="configs/toy_rtlm_d_xl.cfg")
    ap.add_argument("--arch", default=None, help="override the config's architecture")
    ap.add_argument("--blocks", type=int, default=None,
                    help="number of blocks (default: the config's)")
    ap.add_argument("--seed", default="1")
    ap.add_argument("--set", action="append", default=[], help="extra key=value override")
    args = ap.parse_args()

    n_blocks = args.blocks
    if n_blocks is None:
        n_blocks = 2
        with open(args.config, encoding="utf-8") as f:
            for line in f:
                m = re.match(r"\s*n_blocks\s*=\s*(\d+)", line)
                if m:
                    n_blocks = int(m.group(1))
    if args.arch and args.arch.startswith("rtlm_f") and args.blocks is None:
        n_blocks = max(n_blocks, 3)

    print("block\tvalid_ppl")
    with tempfile.TemporaryDirectory() as work:
        for block in range(n_blocks):
            ckpt = os.path.join(work, f"b{block}.ckpt")
            cmd = [args.rtlm, "train", "--config", args.config, "--seed", args.seed,
                   "--lstm-blocks", str(block), "--checkpoint", ckpt,
                   "--set", f"n_blocks={n_blocks}"]
            if args.arch:
                cmd += ["--arch", args.arch]
            for kv in args.set:
                cmd += ["--set", kv]
            out = run(cmd)
            m = re.search(r"valid ppl ([0-9.eE+-]+|nan)", out)
            print(f"{block}\t{m.group(1) if m else 'NA'}", flush=True)


if __name__ == "__main__":
    main()
