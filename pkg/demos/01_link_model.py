"""
Link model: initialization time, key rate and QBER versus fiber length
======================================================================

The channel model is anchored at back-to-back and at 25 km of fiber.
Everything in between follows from those two points.
"""

import numpy as np

from qkdnfv import link_model

m = link_model.DEFAULT_MODEL
d = np.linspace(0, 25, 11)

# initialization grows and key rate decays, both exponentially in distance
init = [link_model.init_time_s(m, x) for x in d]
rate = [link_model.secret_key_rate_bps(m, x) for x in d]
qber = [link_model.qber(m, x) for x in d]
att = [link_model.attenuation_db(m, x) for x in d]

print(f"{'km':>5} {'init s':>9} {'rate b/s':>9} {'QBER':>7} {'dB':>5}")
for row in zip(d, init, rate, qber, att):
    print("{:5.1f} {:9.1f} {:9.1f} {:7.4f} {:5.1f}".format(*row))

# per-km coefficients, if you prefer that form
print("init growth /km", m.init_growth)
print("rate decay  /km", m.rate_decay)

# how long until the first 256-bit block lands at 10 km
t = link_model.init_time_s(m, 10) + 256 / link_model.secret_key_rate_bps(m, 10)
print(f"first block at 10 km after {t:.1f} s")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, ax = plt.subplots(1, 3, figsize=(12, 3.5))
    ax[0].plot(d, init, "o-")
    ax[0].set_ylabel("initialization time (s)")
    ax[1].semilogy(d, rate, "o-")
    ax[1].set_ylabel("secret key rate (b/s)")
    ax[2].plot(d, qber, "o-")
    ax[2].set_ylabel("QBER")
    for a in ax:
        a.set_xlabel("distance (km)")
    fig.tight_layout()
    fig.savefig("link_model.png", dpi=100)
    print("saved link_model.png")
