"""Acceptance gate for the artifact: one test per criterion, each printing a
single "[criterion N] PASS/FAIL" line (run with -s to see them live).

Criterion 2 is a known red: no quartic can invert the d3c1 preset curve to
within 2 gray levels (the optimal quartic's maximum error is 2.44), and
d2c1 reaches 2.9 under the least-squares fit contract. See the assertion
message for the measured values.
"""

import time
import warnings

import numpy as np
import pytest

from cdmsg.calibrate import fit_inverse_poly, histogram_256, build_hist_map, InversePoly
from cdmsg.cdtf import DEVICE_PRESETS, forward, preset, apply_cdtf
from cdmsg.codec import SaturationWarning, layout_grid, ratex_painted
from cdmsg.calibrate import equalize_with_record
from cdmsg.harness import (
    ExperimentConfig,
    default_config,
    make_default_carriers,
    run_experiment,
)
from cdmsg.image import quantize_values
from cdmsg.svm import phi

pytestmark = pytest.mark.filterwarnings("ignore::cdmsg.codec.SaturationWarning")

GRID = np.arange(256, dtype=np.float64)


def announce(num: int, name: str, passed: bool, detail: str) -> None:
    print(f"\n[criterion {num}] {'PASS' if passed else 'FAIL'} {name}: {detail}")


@pytest.fixture(scope="module")
def carrier_paths(tmp_path_factory):
    directory = tmp_path_factory.mktemp("carriers")
    return make_default_carriers(str(directory), count=5, size=512)


@pytest.fixture(scope="module")
def default_sweep(tmp_path_factory, carrier_paths):
    """The frozen-seed default sweep: 9 presets x {0,45} deg x {3,5} kappa,
    4 methods, 5 carriers x 6 messages, with the optimizer self-check on."""
    out = tmp_path_factory.mktemp("sweep")
    cfg = default_config(carrier_paths, str(out), svm_self_check=True)
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaturationWarning)
        report = run_experiment(cfg)
    return report, time.perf_counter() - t0


def test_criterion_1_identity_channel_exactness(tmp_path, carrier_paths):
    cfg = ExperimentConfig(
        carriers=carrier_paths,
        presets=("identity",),
        angles=(0.0,),
        kappas=(5.0,),
        messages_per_carrier=5,
        out_dir=str(tmp_path / "identity"),
    )
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    per_method = {m: (r.accuracy, r.bits_total) for m in cfg.methods for r in report.rows if r.method == m}
    ok = (
        all(acc == 1.0 and bits >= 1475 for acc, bits in per_method.values())
        and elapsed < 5.0
    )
    announce(
        1,
        "identity-channel exactness",
        ok,
        f"{ {m: f'{a:.3f}/{b}b' for m, (a, b) in per_method.items()} } in {elapsed:.1f}s",
    )
    for method, (acc, bits) in per_method.items():
        assert acc == 1.0, f"{method} accuracy {acc} != 1.0 on the identity channel"
        assert bits >= 1475, f"{method} decoded only {bits} bits"
    assert elapsed < 5.0, f"identity run took {elapsed:.1f}s (budget 5s)"


def test_criterion_2_calibration_roundtrip():
    failures = {}
    for name in DEVICE_PRESETS:
        for angle in (0.0, 45.0):
            model = preset(name, angle_deg=angle)
            captured = forward(GRID, model)  # noiseless curve evaluation
            poly = fit_inverse_poly(np.stack([GRID, captured], axis=1))
            err = float(np.abs(255.0 * poly(captured / 255.0) - GRID).max())
            if err > 2.0:
                failures[f"{name}@{angle:g}"] = round(err, 3)
    announce(
        2,
        "calibration round-trip <= 2 gray levels",
        not failures,
        "all presets within 2" if not failures else f"exceeded by {failures}",
    )
    assert not failures, (
        f"max grid error exceeds 2 gray levels for {failures}; the optimal "
        "quartic for the d3c1 curve has maximum error 2.44 (no fit can pass), "
        "and d2c1 needs a max-error-targeted fit that the least-squares "
        "contract rules out"
    )


def test_criterion_3_a0_independence():
    rng = np.random.default_rng(20150)
    worst = 0.0
    for _ in range(1000):
        coeffs = rng.uniform(-1.0, 1.0, 5)
        i_o, i_e = rng.uniform(0.0, 1.0, 2)
        delta = rng.choice([-1.0, 1.0])
        base = InversePoly(*coeffs)
        bumped = InversePoly(coeffs[0] + delta, *coeffs[1:])
        worst = max(worst, abs((base(i_o) - base(i_e)) - (bumped(i_o) - bumped(i_e))))
    announce(3, "difference is independent of a0", worst < 1e-12, f"worst drift {worst:.2e}")
    assert worst < 1e-12


def test_criterion_4_phi_identities():
    x = np.linspace(0.0, 1.0, 256)
    a, b = np.meshgrid(x, x)
    forward_map = phi(a.ravel(), b.ravel())
    backward_map = phi(b.ravel(), a.ravel())
    anti = float(np.abs(forward_map + backward_map).max())
    diag = float(np.abs(phi(x, x)).max())
    ok = anti <= 1e-15 and diag <= 1e-15
    announce(4, "feature-map identities", ok, f"antisymmetry {anti:.1e}, diagonal {diag:.1e}")
    assert diag <= 1e-15
    assert anti <= 1e-15


def test_criterion_5_optimizer_convexity(default_sweep):
    report, _ = default_sweep
    self_check_errors = [e for e in report.errors if "self-check" in e]
    ok = report.config.svm_self_check and not self_check_errors
    announce(
        5,
        "optimizer convexity behavior",
        ok,
        "every training in the sweep re-ran from a second start: objectives "
        "within 10*tol, sign agreement >= 99.9%, objective non-increasing per pass",
    )
    assert report.config.svm_self_check, "sweep must run with the optimizer self-check"
    assert not self_check_errors, self_check_errors


def test_criterion_6_oblique_low_kappa_ordering(default_sweep):
    report, elapsed = default_sweep
    means = {m: report.mean_accuracy(m, angle=45.0, kappa=3.0) for m in report.config.methods}
    bits = {
        m: sum(r.bits_total for r in report.rows if r.method == m and r.angle == 45.0 and r.kappa == 3.0)
        for m in report.config.methods
    }
    ok = (
        means["oorc"] >= means["two-step"] >= means["naive"]
        and means["hidden-ratex"] >= means["naive"]
        and means["oorc"] >= 0.90
        and means["naive"] <= 0.75
        and min(bits.values()) >= 15000
        and elapsed < 300.0
    )
    announce(
        6,
        "oblique +3 accuracy ordering",
        ok,
        f"means={ {m: f'{v:.4f}' for m, v in means.items()} }, "
        f"bits/method={min(bits.values())}, sweep {elapsed:.0f}s",
    )
    assert means["oorc"] >= means["two-step"] >= means["naive"], means
    assert means["hidden-ratex"] >= means["naive"], means
    assert means["oorc"] >= 0.90, means
    assert means["naive"] <= 0.75, means
    assert min(bits.values()) >= 15000, bits
    assert elapsed < 300.0, f"default sweep took {elapsed:.0f}s (budget 300s)"


def test_criterion_7_frontal_strong_signal_convergence(default_sweep):
    report, _ = default_sweep
    frontal = {m: report.mean_accuracy(m, angle=0.0, kappa=5.0) for m in ("naive", "two-step", "oorc")}
    gap_frontal = report.mean_accuracy("oorc", 0.0, 5.0) - report.mean_accuracy("naive", 0.0, 5.0)
    gap_oblique = report.mean_accuracy("oorc", 45.0, 3.0) - report.mean_accuracy("naive", 45.0, 3.0)
    ok = all(v >= 0.95 for v in frontal.values()) and gap_frontal < gap_oblique
    announce(
        7,
        "frontal +5 convergence",
        ok,
        f"means={ {m: f'{v:.4f}' for m, v in frontal.items()} }, "
        f"oorc-naive gap {gap_frontal:.4f} (frontal) vs {gap_oblique:.4f} (oblique)",
    )
    for method, value in frontal.items():
        assert value >= 0.95, f"{method} mean {value:.4f} < 0.95 at frontal +5"
    assert gap_frontal < gap_oblique


def test_criterion_8_hidden_map_inverts_channel(carrier_paths):
    from cdmsg.image import read_image
    from dataclasses import replace

    carrier = read_image(carrier_paths[0])
    eq, _ = equalize_with_record(carrier)
    layout = layout_grid(eq.width, eq.height, 8, 8, 5)
    displayed = ratex_painted(eq, layout)
    ref_hist = histogram_256(displayed)
    n = displayed.width * displayed.height
    mass_levels = np.nonzero(histogram_256(displayed) >= 0.001 * n)[0].astype(float)

    worst = {}
    for name in DEVICE_PRESETS:
        model = replace(preset(name), sensor_noise_sigma=0.0)
        cap = apply_cdtf(displayed, model)
        lut = build_hist_map(ref_hist, histogram_256(cap)).lut
        # composed map vs identity at the displayed levels that carry mass
        cap_levels = quantize_values(forward(mass_levels, model)).astype(int)
        err_identity = np.abs(lut[cap_levels] - mass_levels).max()
        # cross-check the lut against the numerically inverted channel curve
        curve = forward(GRID, model)
        cap_mass = np.nonzero(histogram_256(cap) >= 0.001 * n)[0]
        inverted = np.interp(cap_mass.astype(float), curve, GRID)
        err_inverse = np.abs(lut[cap_mass] - inverted).max()
        worst[name] = max(err_identity, err_inverse)
    ok = all(v <= 3.0 for v in worst.values())
    announce(8, "histogram map inverts the channel", ok, f"worst deviations {worst}")
    for name, err in worst.items():
        assert err <= 3.0, f"{name}: histogram map deviates {err:.1f} gray levels"


def test_criterion_9_deterministic_reports(tmp_path, carrier_paths):
    cfg = ExperimentConfig(
        carriers=carrier_paths[:2],
        presets=("d1c2", "d3c3"),
        angles=(45.0,),
        kappas=(3.0,),
        messages_per_carrier=2,
        out_dir=str(tmp_path / "run_a"),
    )
    run_experiment(cfg)
    run_experiment(cfg, out_dir=str(tmp_path / "run_b"))
    body_a = (tmp_path / "run_a" / "report.csv").read_bytes()
    body_b = (tmp_path / "run_b" / "report.csv").read_bytes()
    ok = body_a == body_b
    announce(9, "byte-identical reports", ok, f"{len(body_a)} bytes compared")
    assert ok, "report.csv bodies differ between identical runs"
