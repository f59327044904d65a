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

"""Writes a 44.1 kHz 16-bit WAV fixture and the first 100 samples as decoded
by Python's standard `wave` module, for cross-checking the C++ decoder."""
import pathlib
import sys
import wave

import numpy as np

out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
out.mkdir(parents=True, exist_ok=True)
rate = 44100
t = np.arange(int(0.25 * rate)) / rate
rng = np.random.default_rng(3)
signal = 0.4 * np.sin(2 * np.pi * 440 * t) + 0.05 * rng.standard_normal(t.size)
pcm = np.clip(np.round(signal * 32767), -32768, 32767).astype("<i2")

with wave.open(str(out / "tone44k_s16.wav"), "wb") as w:
    w.setnchannels(1)
    w.setsampwidth(2)
    w.setframerate(rate)
    w.writeframes(pcm.tobytes())

with wave.open(str(out / "tone44k_s16.wav"), "rb") as r:
    assert r.getframerate() == rate
    decoded = np.frombuffer(r.readframes(100), dtype="<i2").astype(np.float64) / 32768.0

(out / "tone44k_s16.first100.txt").write_text("\n".join(repr(float(v)) for v in decoded) + "\n")
