"""Propagators, the closed-form oracle, right sides, stepping, residuals."""

import numpy as np
import pytest

from pkshear.errors import BlowupSuspected
from pkshear.grid import GridSpec, make_grid
from pkshear.fields import (
    SpectralField,
    VectorField,
    FlowState,
    derivative,
    l2_norm,
    linf_norm,
    project_nonzero,
)
from pkshear.elliptic import leray_project
from pkshear.dynamics import (
    Params,
    closed_form_linear_solution,
    linear_propagator,
    propagate_state_linear,
    density_rhs,
    momentum_rhs,
    step_imex,
    vorticity_omega2,
    residual_omega2_equation,
    residual_delta_u2_equation,
)

from conftest import mesh, random_field, random_divfree, make_state


class TestClosedFormOracle:
    def test_t_zero_identity(self, grid16):
        f0 = random_field(grid16, 0)
        out = closed_form_linear_solution(f0, A=100.0, t=0.0)
        assert np.array_equal(out.coeffs, f0.coeffs)

    def test_single_mode_decay_factor(self, grid16):
        # mode (1, eta=0, 0) at A=1000: factor exp(-(t + t^3/3)/1000)
        c = np.zeros(grid16.spec.shape, dtype=np.complex128)
        c[1, 0, 0] = 0.5
        c[-1, 0, 0] = 0.5
        f0 = SpectralField(grid16, c)
        t = 2.0
        out = closed_form_linear_solution(f0, A=1000.0, t=t)
        expected = 0.5 * np.exp(-(t + t**3 / 3.0) / 1000.0)
        assert abs(out.coeffs[1, 0, 0] - expected) < 1e-14

    def test_q_zero_pure_heat(self, grid16):
        # mode (1, eta=0, -1): q = 0, factor exp(-2t/A), no label drift
        c = np.zeros(grid16.spec.shape, dtype=np.complex128)
        c[1, 0, -1] = 1.0
        c[-1, 0, 1] = 1.0
        f0 = SpectralField(grid16, c)
        t, A = 3.0, 50.0
        out = closed_form_linear_solution(f0, A=A, t=t)
        assert abs(out.coeffs[1, 0, -1] - np.exp(-2 * t / A)) < 1e-14

    def test_transport_shift_against_characteristics(self, grid16):
        # A huge: pure transport; solution is f0 sampled at (x - t*y, y, z - t*y)
        g = grid16
        t = 3 * g.deta
        x, y, z = mesh(g)
        f0 = SpectralField.from_values(g, np.cos(x) + 0.5 * np.cos(x + z))
        out = closed_form_linear_solution(f0, A=1e15, t=t)
        expected = np.cos(x - t * y) + 0.5 * np.cos((x + z) - 2 * t * y)
        assert np.max(np.abs(out.lab_values() - expected)) < 1e-9

    def test_decay_against_fine_rk4(self, grid16):
        # independent integration of df/dtau = -(K^2 + (eta - q tau)^2)/A * f
        g = grid16
        A, t = 7.0, 1.3
        for (i1, im, i3) in [(1, 2, 0), (2, -3, 1), (1, 0, -1), (0, 4, 0)]:
            eta = g.eta.ravel()[im]
            q = float(g.k1.ravel()[i1] + g.k3.ravel()[i3])
            Ksq = float(g.k1.ravel()[i1] ** 2 + g.k3.ravel()[i3] ** 2)
            rate = lambda tau: -(Ksq + (eta - q * tau) ** 2) / A
            f, ntau = 1.0, 4000
            h = t / ntau
            for k in range(ntau):
                tau = k * h
                k1v = rate(tau) * f
                k2v = rate(tau + h / 2) * (f + h / 2 * k1v)
                k3v = rate(tau + h / 2) * (f + h / 2 * k2v)
                k4v = rate(tau + h) * (f + h * k3v)
                f += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            c = np.zeros(g.spec.shape, dtype=np.complex128)
            c[i1, im, i3] = 1.0
            c[-i1, -im, -i3] = 1.0
            out = closed_form_linear_solution(SpectralField(g, c), A=A, t=t)
            assert abs(out.coeffs[i1, im, i3] - f) < 1e-8 * abs(f)


class TestLinearPropagator:
    def test_matches_closed_form_any_dt(self, grid16):
        f0 = random_field(grid16, 1)
        A = 12.0
        for dt in (0.013, 0.4, 1.7):
            a = linear_propagator(f0, A, dt)
            b = closed_form_linear_solution(f0, A, dt)
            assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-14
            assert a.frame_shear == dt

    def test_semigroup_scalar(self, grid16):
        f0 = random_field(grid16, 2)
        A = 9.0
        one = linear_propagator(linear_propagator(f0, A, 0.3), A, 0.5)
        two = linear_propagator(f0, A, 0.8)
        scale = np.max(np.abs(two.coeffs))
        assert np.max(np.abs(one.coeffs - two.coeffs)) < 1e-12 * scale

    def test_infinite_a_identity_on_untilted_mode(self, grid16):
        c = np.zeros(grid16.spec.shape, dtype=np.complex128)
        c[0, 0, 0] = 4.0  # q = 0, eta = 0: zero symbol
        out = linear_propagator(SpectralField(grid16, c), A=1e30, dt=5.0)
        assert out.coeffs[0, 0, 0] == 4.0


class TestVelocityPropagator:
    def test_preserves_divergence(self, grid16):
        u = random_divfree(grid16, 3)
        st = make_state(grid16, u=u)
        for dt in (0.2, 1.0):
            out = propagate_state_linear(st, A=5.0, dt=dt)
            assert out.divergence_rel() <= 1e-12

    def test_semigroup(self, grid16):
        u = random_divfree(grid16, 4)
        st = make_state(grid16, u=u)
        A = 11.0
        one = propagate_state_linear(propagate_state_linear(st, A, 0.4), A, 0.25)
        two = propagate_state_linear(st, A, 0.65)
        for a, b in zip(one.fields(), two.fields()):
            scale = max(np.max(np.abs(b.coeffs)), 1e-30)
            assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-12 * scale

    def test_q_zero_slots_pure_heat(self, grid16):
        g = grid16
        c = np.zeros(g.spec.shape, dtype=np.complex128)
        im = 2
        c[1, im, -1] = 1.0  # q = 0 slot
        c[-1, -im, 1] = 1.0
        u1 = SpectralField(g, c)
        # build a div-free single-mode vector by projecting
        v = leray_project(VectorField((u1, SpectralField.zeros(g), SpectralField.zeros(g))))
        st = make_state(g, u=tuple(v))
        A, dt = 4.0, 0.7
        out = propagate_state_linear(st, A, dt)
        eta = g.eta.ravel()[im]
        factor = np.exp(-(2.0 + eta**2) * dt / A)
        for before, after in zip(v, (out.u1, out.u2, out.u3)):
            assert np.max(np.abs(after.coeffs - before.coeffs * factor)) < 1e-14

    def test_against_fine_rk4_system(self, grid16):
        # independent oracle: RK4 on u' = -(|k|^2/A) u + (q u2 / |k|^2) k(sigma)
        g = grid16
        A, t = 6.0, 0.9
        i1, im, i3 = 2, 3, 1
        k1 = float(g.k1.ravel()[i1]); k3 = float(g.k3.ravel()[i3])
        eta0 = g.eta.ravel()[im]; q = k1 + k3
        u = np.array([0.3 + 0.1j, 0.5 - 0.2j, -0.4 + 0.05j])
        # make it divergence free at sigma = 0
        kvec = np.array([k1, eta0, k3])
        u -= kvec * (kvec @ u) / (kvec @ kvec)
        ntau = 6000
        h = t / ntau

        def deriv(tau, v):
            k = np.array([k1, eta0 - q * tau, k3])
            ksq = k @ k
            return -(ksq / A) * v + (q * v[1] / ksq) * k

        v = u.copy()
        for kstep in range(ntau):
            tau = kstep * h
            a = deriv(tau, v)
            b = deriv(tau + h / 2, v + h / 2 * a)
            cc = deriv(tau + h / 2, v + h / 2 * b)
            d = deriv(tau + h, v + h * cc)
            v += h / 6 * (a + 2 * b + 2 * cc + d)

        comps = []
        for val in u:
            c = np.zeros(g.spec.shape, dtype=np.complex128)
            c[i1, im, i3] = val
            c[-i1, -im, -i3] = np.conj(val)
            comps.append(SpectralField(g, c))
        st = make_state(g, u=tuple(comps))
        out = propagate_state_linear(st, A, t)
        got = np.array([f.coeffs[i1, im, i3] for f in (out.u1, out.u2, out.u3)])
        assert np.max(np.abs(got - v)) < 1e-8 * max(np.max(np.abs(v)), 1e-30)


class TestDensityRhs:
    def test_constant_density_no_velocity(self, grid16):
        n = SpectralField.from_values(grid16, 3.0 * np.ones(grid16.spec.shape))
        st = make_state(grid16, n=n)
        rhs = density_rhs(st, A=2.0)
        assert l2_norm(rhs) < 1e-13

    def test_solenoidal_velocity_constant_density(self, grid16):
        u = random_divfree(grid16, 5)
        n = SpectralField.from_values(grid16, 2.0 * np.ones(grid16.spec.shape))
        st = make_state(grid16, n=n, u=tuple(u))
        rhs = density_rhs(st, A=2.0, chemotaxis=False)
        assert l2_norm(rhs) < 1e-12

    def test_mean_exactly_zero(self, grid16):
        n = random_field(grid16, 6)
        n.coeffs[0, 0, 0] = 1.0  # positive-ish background
        u = random_divfree(grid16, 7)
        st = make_state(grid16, n=n, u=tuple(u))
        rhs = density_rhs(st, A=3.0)
        assert rhs.coeffs[0, 0, 0] == 0.0


class TestMomentumRhs:
    def test_zero_state(self, grid16):
        st = make_state(grid16)
        rhs = momentum_rhs(st, A=2.0)
        assert max(l2_norm(c) for c in rhs) == 0.0

    def test_lift_term_single_mode(self, grid16):
        # u2 = eps sin(x): raw right side is the lift -(eps sin x, 0, eps sin x);
        # its Leray projection kills the x component and keeps the z component.
        g = grid16
        eps = 1e-3
        x, _, _ = mesh(g)
        u2 = SpectralField.from_values(g, eps * np.sin(x))
        st = make_state(g, u=(SpectralField.zeros(g), u2, SpectralField.zeros(g)))
        rhs = momentum_rhs(st, A=1e12)  # advection/buoyancy negligible
        assert np.max(np.abs(rhs[2].values() + eps * np.sin(x))) < 1e-12
        assert l2_norm(rhs[0]) < 1e-15
        assert l2_norm(rhs[1]) < 1e-15

    def test_manufactured_state_matches_analytic(self, grid16):
        g = grid16
        A = 5.0
        eta0 = g.eta.ravel()[2]
        x, y, z = mesh(g)
        u1v = np.sin(eta0 * y)
        u2v = np.sin(x)
        st = make_state(
            g,
            n=SpectralField.from_values(g, 2.0 + np.cos(x + z)),
            u=(SpectralField.from_values(g, u1v),
               SpectralField.from_values(g, u2v),
               SpectralField.zeros(g)),
        )
        raw1 = -np.sin(x) - (eta0 / A) * np.sin(x) * np.cos(eta0 * y)
        raw2 = -(1 / A) * np.sin(eta0 * y) * np.cos(x) + (1 / A) * np.cos(x + z)
        raw3 = -np.sin(x) + np.zeros_like(x)
        # independent projection: plain symbol algebra on the analytic arrays
        k = (g.k1, np.broadcast_to(g.eta, g.spec.shape), g.k3)
        ksq = g.ksq_eff(0.0)
        raw_hat = [g.forward(raw1), g.forward(raw2), g.forward(raw3)]
        kdotv = sum(ki * vi for ki, vi in zip(k, raw_hat))
        inv = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)
        expected = [vi - ki * kdotv * inv for ki, vi in zip(k, raw_hat)]
        got = momentum_rhs(st, A)
        for e, f in zip(expected, got):
            assert np.max(np.abs(e - f.coeffs)) < 1e-10

    def test_zero_mode_wall(self, grid16):
        # rhs never deposits into u2 on the k1 = k3 = 0 column
        n = random_field(grid16, 8)
        n.coeffs[0, 0, 0] = 2.0
        u = random_divfree(grid16, 9)
        st = make_state(grid16, n=n, u=tuple(u))
        rhs = momentum_rhs(st, A=2.0)
        assert np.max(np.abs(rhs[1].coeffs[0, :, 0])) < 1e-15


class TestStepImex:
    def _params(self, **kw):
        defaults = dict(A=5.0, t_end=10.0, dt=0.05, dt_min=1e-8, cfl=0.4)
        defaults.update(kw)
        return Params(**defaults)

    def test_zero_state_stays_zero(self, grid16):
        st = make_state(grid16)
        out, rep = step_imex(st, self._params())
        assert all(l2_norm(f) == 0.0 for f in out.fields())
        assert rep.dt == 0.05

    def test_frozen_linear_matches_oracle_through_remaps(self):
        g = make_grid(GridSpec(Nx=8, Ny=64, Nz=8, Ly=2 * np.pi))
        f0 = random_field(g, 10, m_band=6, kxz_band=2)
        st = make_state(g, n=f0.copy())
        params = self._params(A=20.0, dt=0.22, linear_only=True, fluid=False)
        nsteps = 12  # crosses several remap quanta (deta = 1)
        for _ in range(nsteps):
            st, rep = step_imex(st, params)
        t = nsteps * 0.22
        oracle = closed_form_linear_solution(f0, 20.0, t, frame_shear=st.frame_shear)
        num = l2_norm(st.n - oracle)
        den = l2_norm(oracle)
        assert num < 1e-12 * den

    def test_mass_divfree_wall_invariants(self, grid16):
        g = grid16
        x, y, z = mesh(g)
        nvals = 1.0 + 0.5 * np.exp(-(y**2)) * (1 + 0.3 * np.cos(x) * np.cos(z))
        n = SpectralField.from_values(g, nvals)
        n = SpectralField(g, np.where(g.dealias_mask, n.coeffs, 0.0))
        u = random_divfree(g, 11, m_band=6, kxz_band=3)
        st = make_state(g, n=n, u=tuple(u))
        mass0 = st.mass()
        params = self._params(A=50.0, dt=0.1)
        for _ in range(20):
            st, rep = step_imex(st, params)
            assert st.divergence_rel() <= 1e-12
            assert np.max(np.abs(st.u2.coeffs[0, :, 0])) < 1e-12
        assert abs(st.mass() - mass0) <= 1e-10 * abs(mass0)

    def test_order_two_self_convergence(self, grid16):
        g = grid16
        n = random_field(g, 12, m_band=4, kxz_band=2, amplitude=3.0)
        n.coeffs[0, 0, 0] = 1.0
        u = random_divfree(g, 13, m_band=4, kxz_band=2)
        base = make_state(g, n=n, u=tuple(u))
        params = self._params(A=4.0, dt=0.1, n_change_cap=10.0)
        T = 0.64

        def run(dt):
            st = base.copy()
            for _ in range(round(T / dt)):
                st, _ = step_imex(st, params, dt=dt)
            return st

        ref = run(0.01)
        errs = []
        for dt in (0.08, 0.04):
            st = run(dt)
            errs.append(sum(l2_norm(a - b) for a, b in zip(st.fields(), ref.fields())))
        ratio = errs[0] / errs[1]
        assert 3.3 < ratio < 5.2, f"convergence ratio {ratio}"

    def test_cfl_rejection_blowup_error(self, grid16):
        g = grid16
        _, _, z = mesh(g)
        # violent velocity, dt_min just below dt: controller must give up
        u1 = SpectralField.from_values(g, 500.0 * np.sin(z))  # div-free as is
        n = SpectralField.from_values(g, np.ones(g.spec.shape))
        st = make_state(g, n=n, u=(u1, SpectralField.zeros(g), SpectralField.zeros(g)))
        params = self._params(A=1.0, dt=1.0, dt_min=0.9, cfl=0.1)
        with pytest.raises(BlowupSuspected) as exc:
            step_imex(st, params)
        assert "dt" in exc.value.diagnostics


class TestResiduals:
    def _developed_state(self, grid):
        n = random_field(grid, 14, m_band=3, kxz_band=1, amplitude=2.0)
        n.coeffs[0, 0, 0] = 1.0
        u = random_divfree(grid, 15, m_band=3, kxz_band=1)
        return make_state(grid, n=n, u=tuple(u))

    def test_zero_state_zero_residual(self, grid16):
        st = make_state(grid16)
        st2 = st.copy()
        st2.n = SpectralField(grid16, st.n.coeffs.copy(), st.frame_shear + 0.1)
        st2 = make_state(grid16)
        for f in st2.fields():
            f.frame_shear = 0.1
        assert residual_omega2_equation(st, st2, 0.1, 2.0) == 0.0

    @pytest.mark.parametrize("residual_fn", [residual_omega2_equation,
                                             residual_delta_u2_equation])
    def test_order_two_reduction(self, grid16, residual_fn):
        st = self._developed_state(grid16)
        params = Params(A=4.0, t_end=1.0, dt=1.0, dt_min=1e-10, cfl=0.9,
                        n_change_cap=10.0)
        vals = []
        for dt in (0.04, 0.02):
            st2, _ = step_imex(st, params, dt=dt)
            vals.append(residual_fn(st, st2, dt, 4.0))
        ratio = vals[0] / vals[1]
        assert 3.5 < ratio < 4.5, f"residual ratio {ratio}"
