"""Random generators shared by the property and acceptance tests."""

from cryonoise.serial_bias import ModeSpec, SerialBiasConfig


def random_bias_config(rng):
    f_s = rng.uniform(2e9, 8e9)
    f_p = f_s + rng.uniform(1e9, 10e9)
    G = 10 ** rng.uniform(0.3, 3.0)
    kind = "shot" if rng.random() < 0.3 else "thermal"
    modes = [ModeSpec(0, f_s, rng.uniform(0.3, 1.0), G, G * rng.uniform(0, 0.05)),
             ModeSpec(-1, abs(f_s - f_p), rng.uniform(0.3, 1.0), G - 1, rng.uniform(0, 0.05))]
    for n in rng.choice([1, -2, 2, 3, -4, 4, -5], size=rng.integers(0, 6), replace=False):
        modes.append(ModeSpec(int(n), abs(f_s + n * f_p), rng.uniform(0.2, 1.0),
                              G ** rng.uniform(0.1, 0.9), rng.uniform(0, 0.1)))
    npts = int(rng.integers(3, 30))
    if kind == "thermal":
        eps = rng.uniform(0.005, 60, npts)
    else:
        eps = rng.uniform(-60, 60, npts)
    return SerialBiasConfig(
        f_s=f_s, f_p=f_p, G=G, A_s=modes[0].A_n, A_i=modes[1].A_n, modes=modes,
        gsys=10 ** rng.uniform(5, 9), tsys=rng.uniform(0.5, 20),
        epsilon_grid=eps.tolist(), n_exc_loss=rng.uniform(0, 0.5), kind=kind,
        junction_T=rng.uniform(0, 0.1),
    )
