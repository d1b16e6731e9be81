"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the terminal
summary) or ``python3 -m tests.test_acceptance`` (lines printed directly).
"""

import time
import warnings

import numpy as np

from qresponse import analytic as A
from qresponse import correlators as C
from qresponse import dynamics as D
from qresponse import workstats as WS
from qresponse.linalg import whitelist
from qresponse.model import (
    SY,
    SZ,
    SourceCoupling,
    SystemSpec,
    build_qubit,
    build_transverse_ising,
    build_xxz_chain,
    site_operator,
)
from qresponse.thermal import (
    bkm_three,
    chi_S_N,
    chi_T_mu,
    gibbs,
    solve_fixed_SN,
    suzuki_limit,
    thermo_point,
)
from tests.acceptance_log import record


def _run(number, title, limit, check):
    t0 = time.perf_counter()
    ok, detail = check()
    dt = time.perf_counter() - t0
    in_time = dt < limit
    if not in_time:
        detail += f"; runtime over the {limit:g} s budget"
    record(number, title, ok and in_time, detail, dt)
    return ok and in_time, detail


# -- 1 ---------------------------------------------------------------------


def check_fdr():
    spec = build_transverse_ising(3, 1.0, 0.5)
    st = gibbs(spec, 1.0)
    worst = 0.0
    fs = whitelist(0.5) + whitelist(0.3)[3:4]
    for f in fs:
        for m in range(spec.n_sources):
            for n in range(spec.n_sources):
                _, _, _, dev = C.fdr_table(st, m, n, f)
                if dev.size:
                    worst = max(worst, float(dev.max()))
    return worst <= 1e-12, f"max per-line relative deviation {worst:.2e} over {len(fs)} functions"


def test_criterion_01_fdr():
    ok, detail = _run(1, "generalized FDR per line", 1.0, check_fdr)
    assert ok, detail


# -- 2 ---------------------------------------------------------------------


def check_kubo():
    spec = build_transverse_ising(3, 1.0, 0.5)
    st = gibbs(spec, 1.0)
    worst = max(
        C.kubo_relaxation_check(st, m, n) for m in range(spec.n_sources) for n in range(spec.n_sources)
    )
    # time-domain form: delayed kernel = -beta d/ds <phi_m(s); phi_n>
    s = np.linspace(0.1, 4.0, 9)
    h = 1e-5
    K = C.linear_response(st, spec, 0, 1)
    fd = -st.beta * (C.bkm_time(st, spec.phi[0], spec.phi[1], s + h) - C.bkm_time(st, spec.phi[0], spec.phi[1], s - h)) / (2 * h)
    td = float(np.max(np.abs(fd - K.delayed(s))) / np.max(np.abs(K.delayed(s))))
    ok = worst <= 1e-12 and td <= 1e-6
    return ok, f"line mismatch {worst:.2e} (delayed comb = +i beta w x BKM comb), time-domain check {td:.1e}"


def test_criterion_02_kubo():
    ok, detail = _run(2, "Kubo identity per line", 1.0, check_kubo)
    assert ok, detail


# -- 3 ---------------------------------------------------------------------


def legendre_system():
    base = build_xxz_chain(3, 1.0, 0.5, [0.3, -0.2, 0.1])
    Z = [site_operator(SZ, i, 3) for i in range(3)]
    sources = [
        SourceCoupling(base.phi[0], {0: 0.3 * Z[0] @ Z[1], 1: 0.2 * base.phi[3]}),
        SourceCoupling(base.phi[3]),
        SourceCoupling(base.phi[2], {2: 0.1 * Z[1]}),
    ]
    return SystemSpec(base.H0, base.N_op, sources)


def check_static():
    spec = legendre_system()
    beta, mu, h = 0.8, 0.2, 1e-3
    M = spec.n_sources
    j0, E = spec.j_init, np.eye(M)

    def lnZ(j):
        return gibbs(spec, beta, mu, j).logZ

    fd = np.empty((M, M))
    for m in range(M):
        for n in range(M):
            a, b = h * E[m], h * E[n]
            fd[m, n] = (lnZ(j0 + a + b) - lnZ(j0 + a - b) - lnZ(j0 - a + b) + lnZ(j0 - a - b)) / (4 * h * h * beta)
    chiT = chi_T_mu(spec, beta, mu)
    e1 = float(np.max(np.abs(fd - chiT)) / np.max(np.abs(chiT)))

    ref = thermo_point(gibbs(spec, beta, mu), spec)

    def phi_SN(j):
        return thermo_point(solve_fixed_SN(spec, ref.S, ref.N_val, j, beta, mu), spec).Phi

    fdsn = np.array([(phi_SN(j0 + h * E[n]) - phi_SN(j0 - h * E[n])) / (2 * h) for n in range(M)]).T
    chiSN = chi_S_N(spec, beta, mu)
    e2 = float(np.max(np.abs(fdsn - chiSN)) / np.max(np.abs(chiSN)))
    e3 = float(np.max(np.abs(chiT - chiSN - suzuki_limit(spec, beta, mu))))
    ok = e1 <= 1e-5 and e2 <= 1e-4 and e3 <= 1e-8
    return ok, f"chi_T vs lnZ {e1:.1e}, chi_SN vs Legendre {e2:.1e}, Suzuki residual {e3:.1e}"


def test_criterion_03_static_susceptibilities():
    ok, detail = _run(3, "static susceptibilities", 10.0, check_static)
    assert ok, detail


# -- 4 ---------------------------------------------------------------------


def check_volterra():
    spec = build_qubit(1.0, tilt=0.6)
    st = gibbs(spec, 1.2)
    base = D.DriveProtocol.build(0.0, 12.0, [0.0], {0: D.SourceDrive.make("pulse", amplitude=1.0, center=5.0, width=1.2)})
    K = D.volterra_kernels(st, spec, 0, 2)
    amps = [0.02, 0.04, 0.08]
    errs = {1: [], 2: []}
    for lam in amps:
        prot = base.shifted(lam)
        tr = D.propagate(spec, st, prot, 2000)
        for order in (1, 2):
            pred = D.volterra_predict(K, prot, order, tr.times)
            errs[order].append(np.max(np.abs(pred - tr.Phi[:, 0])))
    p1 = D.convergence_exponent(amps, errs[1])
    p2 = D.convergence_exponent(amps, errs[2])
    ok = abs(p1 - 2.0) <= 0.1 and abs(p2 - 3.0) <= 0.15
    return ok, f"fitted exponents {p1:.3f} (order 1), {p2:.3f} (order 2)"


def test_criterion_04_volterra_orders():
    ok, detail = _run(4, "Volterra convergence orders", 30.0, check_volterra)
    assert ok, detail


# -- 5 ---------------------------------------------------------------------


def chain_protocols(M):
    forms = {
        "step": D.SourceDrive.make("step", height=0.4, t_step=1.0),
        "ramp": D.SourceDrive.make("ramp", delta=0.6),
        "pulse": D.SourceDrive.make("pulse", amplitude=0.5, center=2.0, width=0.5),
        "sinusoid": D.SourceDrive.make("sinusoid", amplitude=0.3, frequency=2.0),
        "tabulated": D.SourceDrive.make("tabulated", times=[0, 1, 2.5, 4], values=[0, 0.3, -0.2, 0.1]),
    }
    return {k: D.DriveProtocol.build(0.0, 4.0, np.zeros(M), {0: v, 4: v}) for k, v in forms.items()}


def check_jarzynski():
    spec = build_transverse_ising(3, 1.0, 0.5)
    st = gibbs(spec, 1.0)
    res = {}
    for name, prot in chain_protocols(spec.n_sources).items():
        tr = D.propagate(spec, st, prot, 2000)
        dist = WS.work_distribution(spec, st, prot, tr.U_final)
        res[name] = WS.jarzynski_check(dist, st, spec, prot)
    worst = max(res.values())
    return worst <= 1e-10, f"max residual {worst:.1e} over {', '.join(res)}"


def test_criterion_05_jarzynski():
    ok, detail = _run(5, "Jarzynski equality", 30.0, check_jarzynski)
    assert ok, detail


# -- 6 ---------------------------------------------------------------------


def check_crooks():
    spec = build_transverse_ising(3, 1.0, 0.5)
    st = gibbs(spec, 1.0)
    prot = D.DriveProtocol.build(0.0, 4.0, np.zeros(spec.n_sources), {0: D.SourceDrive.make("ramp", delta=0.8)})
    res = WS.crooks_check(spec, st, prot)
    return res.max_deviation <= 1e-8, f"max deviation {res.max_deviation:.1e} over {res.forward.W.size} outcomes"


def test_criterion_06_crooks():
    ok, detail = _run(6, "Crooks relation", 30.0, check_crooks)
    assert ok, detail


# -- 7 ---------------------------------------------------------------------


def check_zm():
    spec = build_transverse_ising(3, 1.0, 0.5)
    beta = 1.0
    st = gibbs(spec, beta)
    prot = D.DriveProtocol.build(
        0.0, 4.0, np.zeros(spec.n_sources),
        {0: D.SourceDrive.make("ramp", delta=0.7), 1: D.SourceDrive.make("pulse", amplitude=0.4, center=2.0, width=0.6)},
    )
    tr = D.propagate(spec, st, prot, 2000)
    U = tr.U_final
    zf = gibbs(spec, 0.7, 0.0, prot.j_final)
    e_z0 = abs(WS.measurement_partition(spec, st, prot, 0.0, U).value / np.exp(st.logZ) - 1)
    e_b0 = abs(WS.measurement_partition(spec, st, prot, 0.7, U, beta=0.0).value / np.exp(zf.logZ) - 1)
    rev = WS.time_reverse_protocol(prot, spec.parity)
    e_rev = 0.0
    for zeta in (0.3, 1.0, 2.0):
        st_r = gibbs(spec, zeta, 0.0, rev.j_initial)
        tr_r = D.propagate(spec, st_r, rev, 2000)
        a = WS.measurement_partition(spec, st, prot, zeta, U).log_value
        b = WS.measurement_partition(spec, st_r, rev, beta, tr_r.U_final).log_value
        e_rev = max(e_rev, abs(np.expm1(a - b)))
    dist = WS.work_distribution(spec, st, prot, U)
    e_zw = 0.0
    for xi in (0.1 * beta, 0.5 * beta, beta):
        zm = WS.measurement_partition(spec, st, prot, xi, U, beta=beta - xi).value
        e_zw = max(e_zw, abs(WS.characteristic_Zw(dist, xi) - zm / np.exp(st.logZ)))
    ok = e_z0 <= 1e-12 and e_b0 <= 1e-12 and e_rev <= 1e-10 and e_zw <= 1e-10
    return ok, f"zeta=0 {e_z0:.1e}, beta=0 {e_b0:.1e}, reversal {e_rev:.1e}, Z_W relation {e_zw:.1e}"


def test_criterion_07_measurement_partition():
    ok, detail = _run(7, "measurement partition identities", 10.0, check_zm)
    assert ok, detail


# -- 8 ---------------------------------------------------------------------


def onsager_system():
    base = build_transverse_ising(3, 1.0, 0.5)
    ys = [site_operator(SY, i, 3) for i in range(3)]
    return base.with_sources(ys, [f"y{i}" for i in range(3)], eps=[-1, -1, -1])


def check_onsager():
    spec = onsager_system()
    st = gibbs(spec, 0.9)
    eps = spec.parity.eps
    t = np.linspace(-1.0, 6.0, 141)
    worst = 0.0
    for m in range(spec.n_sources):
        for n in range(spec.n_sources):
            a = C.linear_response(st, spec, m, n)
            b = C.linear_response(st, spec, n, m)
            dev = np.max(np.abs(a.delayed(t) - eps[m] * eps[n] * b.delayed(t)))
            dev = max(dev, abs(a.instantaneous - eps[m] * eps[n] * b.instantaneous))
            worst = max(worst, float(dev))
    return worst <= 1e-10, f"max pointwise deviation {worst:.1e} over {spec.n_sources ** 2} pairs"


def test_criterion_08_onsager_casimir():
    ok, detail = _run(8, "Onsager-Casimir reciprocity", 5.0, check_onsager)
    assert ok, detail


# -- 9 ---------------------------------------------------------------------


def check_kk():
    errs = []
    g, w0 = 1.0, 0.5
    om = np.linspace(-(abs(w0) + 20 * g), abs(w0) + 20 * g, 4096)
    lor = 1.0 / (w0 - om - 1j * g)
    spec = build_qubit(1.0)
    st = gibbs(spec, 1.0)
    K = C.linear_response(st, spec, 0, 0)
    eta = 0.2
    om2 = np.linspace(-(1.0 + 20 * eta), 1.0 + 20 * eta, 4096)
    qub = K.frequency(om2, eps=eta) - K.instantaneous
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for grid_om, vals in ((om, lor), (om2, qub)):
            out = A.kramers_kronig(A.FrequencyGrid(grid_om, vals))
            errs += [A.relative_l2(out.values.real, vals.real), A.relative_l2(out.values.imag, vals.imag)]
    worst = max(errs)
    return worst <= 1e-3, "rel. L2 errors " + ", ".join(f"{e:.1e}" for e in errs)


def test_criterion_09_kramers_kronig():
    ok, detail = _run(9, "Kramers-Kronig reconstruction", 5.0, check_kk)
    assert ok, detail


# -- 10 --------------------------------------------------------------------


def check_reference():
    R, Cap = 2.0, 0.7
    rc_ok = complex(A.rc_response(R, Cap, omegas=0.0)) == Cap
    w0, z = 1.3, 0.25
    roots = np.roots([1.0, 2j * z * w0, -(w0**2)])
    poles = A.oscillator_poles(w0, z)
    expected = np.array([(np.sqrt(1 - z * z) - 1j * z) * w0, (-np.sqrt(1 - z * z) - 1j * z) * w0])
    e_pole = max(np.max(np.abs(np.sort_complex(poles) - np.sort_complex(expected))),
                 np.max(np.abs(np.sort_complex(roots) - np.sort_complex(expected))))
    rng = np.random.default_rng(7)
    fp = A.FluidParams(1.0, 0.5, 0.1)
    ward = max(A.ward_residual(fp, rng.normal(), rng.normal(size=3)) for _ in range(100))
    static = A.fluid_current_response(fp, 0.0, [0.3, -0.2, 1.1])
    st_ok = static[0, 0] == fp.sigma / fp.D and np.all(static.ravel()[1:] == 0)
    ok = rc_ok and e_pole <= 1e-12 and ward <= 1e-12 and st_ok
    return ok, (
        f"RC static exact {rc_ok}, pole error {e_pole:.1e}, Ward residual {ward:.1e}, "
        f"static G00 = sigma/D exactly {st_ok}"
    )


def test_criterion_10_reference_models():
    ok, detail = _run(10, "reference models", 1.0, check_reference)
    assert ok, detail


# -- 11 --------------------------------------------------------------------


def four_level_system():
    rng = np.random.default_rng(2024)

    def herm():
        X = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        return 0.5 * (X + X.conj().T)

    return SystemSpec(herm(), None, [herm(), herm(), herm()])


def check_quadratic_identity():
    spec = four_level_system()
    st = gibbs(spec, 0.7)
    m, n, k = 0, 1, 2
    q = C.quadratic_response(st, spec, m, n, k)
    P = spec.phi
    t, h = 2.0, 1e-3

    def b3(tp, tpp):
        return bkm_three(st, C.heisenberg(st, P[m], t), C.heisenberg(st, P[n], tp), C.heisenberg(st, P[k], tpp))

    exact, literal = [], []
    for tp in np.linspace(0.1, 1.7, 5):
        for tpp in np.linspace(0.25, 1.85, 5):
            d2 = (b3(tp + h, tpp + h) - b3(tp + h, tpp - h) - b3(tp - h, tpp + h) + b3(tp - h, tpp - h)) / (4 * h * h)
            literal.append(st.beta**2 * d2)
            exact.append(q.delayed(t - tp, t - tpp))
    exact, literal = np.array(exact), np.array(literal)
    rel = float(np.max(np.abs(literal - exact)) / np.max(np.abs(exact)))
    return rel <= 1e-4, (
        f"max relative mismatch {rel:.2e} on a 5x5 grid; the stated identity omits a "
        "commutator term from the time ordering (see decisions ledger and the corrected-identity test)"
    )


def test_criterion_11_quadratic_second_derivative():
    ok, detail = _run(11, "quadratic response as second derivative", 60.0, check_quadratic_identity)
    assert ok, detail


CHECKS = [
    (1, "generalized FDR per line", 1.0, check_fdr),
    (2, "Kubo identity per line", 1.0, check_kubo),
    (3, "static susceptibilities", 10.0, check_static),
    (4, "Volterra convergence orders", 30.0, check_volterra),
    (5, "Jarzynski equality", 30.0, check_jarzynski),
    (6, "Crooks relation", 30.0, check_crooks),
    (7, "measurement partition identities", 10.0, check_zm),
    (8, "Onsager-Casimir reciprocity", 5.0, check_onsager),
    (9, "Kramers-Kronig reconstruction", 5.0, check_kk),
    (10, "reference models", 1.0, check_reference),
    (11, "quadratic response as second derivative", 60.0, check_quadratic_identity),
]


if __name__ == "__main__":
    for args in CHECKS:
        _run(*args)
