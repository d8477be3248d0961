#!/usr/bin/env python3
"""Tokens to bits to Gray-mapped QAM symbols, and back through likelihoods.

Walks the physical layer bottom-up: bit expansion, constellation geometry,
whole-vocabulary log-likelihood tables, and a bit-error-rate waterfall that
pins the simulated hard-decision link against the closed-form curve.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from tokencom import TokenModulator, Vocabulary, make_constellation, ml_detect
from tokencom.masker import ber
from tokencom.vocab import token_to_bits

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

# --- a vocabulary and its bit geometry -------------------------------------
vocab = Vocabulary.synthetic(30522)
print(f"V = {vocab.size} tokens -> {vocab.bits_per_token} bits per token")
print(f"token 12345 -> bits {''.join(map(str, token_to_bits(12345, vocab)))}")

# --- constellations ----------------------------------------------------------
for m in (2, 4):
    c = make_constellation(m)
    energy = np.mean(np.abs(c.points) ** 2)
    print(f"{2**m}-QAM: {c.order} points, mean energy {energy:.12f}")

c = make_constellation(2)
mod = TokenModulator(vocab, c)
print(f"4-QAM carries a token in K = {mod.n_symbols} symbols (one pad bit)")

# --- likelihood tables: the receiver's view ---------------------------------
rng = np.random.default_rng(1)
h, power, noise_var = complex(0.9, -0.3), 1.0, 0.25
token = 4242
y = h * np.sqrt(power) * mod.modulate(token) + (
    rng.standard_normal(8) + 1j * rng.standard_normal(8)
) * np.sqrt(noise_var / 2)
table = mod.log_likelihood_table(y, h, power, noise_var)
top = np.argsort(table)[::-1][:3]
print(f"sent token {token}; top-3 by log-likelihood: {list(top)}")
print(f"hard decision: {ml_detect(table)}")

# --- BER waterfall -----------------------------------------------------------
snrs_db = np.arange(0, 13, 1.0)
empirical = []
for snr_db in snrs_db:
    gamma = 10 ** (snr_db / 10)
    n_sym = 200_000
    groups = rng.integers(0, 4, size=n_sym)
    symbols = c.symbols_by_group()
    noise = (rng.standard_normal(n_sym) + 1j * rng.standard_normal(n_sym)) * np.sqrt(0.5)
    y = np.sqrt(gamma) * symbols[groups] + noise
    decided = np.argmin(np.abs(y[:, None] - np.sqrt(gamma) * symbols[None, :]) ** 2, axis=1)
    empirical.append(np.bitwise_count((groups ^ decided).astype(np.uint64)).sum() / (2 * n_sym))

closed = [ber(10 ** (s / 10), 1.0, 2) for s in snrs_db]
fig, ax = plt.subplots(figsize=(6, 4))
ax.semilogy(snrs_db, empirical, "o", label="simulated hard decisions")
ax.semilogy(snrs_db, closed, "-", label="closed form")
ax.set_xlabel("per-symbol SNR (dB)")
ax.set_ylabel("bit error rate")
ax.grid(True, which="both", alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "ber_waterfall.png", dpi=150)
print(f"wrote {OUT / 'ber_waterfall.png'}")
