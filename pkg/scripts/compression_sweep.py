"""BFP round-trip NMSE and sniffer NMSE versus mantissa width."""

import argparse

import numpy as np

from oran_isac.adversary import AttackerKnowledge, sniff_fronthaul
from oran_isac.channel import Scene, Target, apply_channel
from oran_isac.fronthaul import compress_bfp, decompress_bfp, nmse
from oran_isac.processing import cancel_leakage, estimate_channel, range_doppler_map
from oran_isac.waveform import Numerology, build_signal_plan, generate_grid

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--seeds", type=int, default=20)
args = p.parse_args()

num = Numerology(256, 64)
print("mantissa_bits,iq_nmse,sniffer_nmse")
for bits in (16, 12, 9, 6, 4, 2):
    iq, sn = [], []
    for s in range(args.seeds):
        plan = build_signal_plan(num, "STOCHASTIC_DATA", seed=s)
        tx = generate_grid(plan, num)
        scene = Scene((Target(40.0, 10.0),), noise_power=1e-6, leakage_gain=0.5,
                      rng_seed=s, reference_amplitude=1e-3)
        rx = apply_channel(tx, scene)
        c = compress_bfp(rx, bits)
        iq.append(nmse(rx.data, decompress_bfp(c).data))
        ref = range_doppler_map(estimate_channel(cancel_leakage(rx, tx), tx), 1, num)
        know = AttackerKnowledge.from_plan("FULL_WAVEFORM", plan)
        sn.append(sniff_fronthaul(c, know, tx, num, ref).nmse)
    print(f"{bits},{np.mean(iq):.3e},{np.mean(sn):.3e}")
