import numpy as np
import pytest

from jetles.boundary import (
    CENTERLINE,
    FARFIELD,
    INTERIOR,
    BoundarySet,
    apply_boundaries,
    apply_centerline,
    apply_jet_inlet,
    apply_periodic,
    face_normals,
    jet_boundaries,
    node_radius,
    riemann_state,
    uniform_boundaries,
)
from jetles.core import FRINGE, ConservativeField, compute_metrics, generate_jet_grid, interior
from jetles.physics import freestream_state, jet_state


def two_invariant_oracle(rho_i, u_i, p_i, fs, n, g):
    """Scalar textbook far-field closure, written independently of the solver."""
    gm1 = g - 1.0
    n = np.asarray(n, float)
    c_i = (g * p_i / rho_i) ** 0.5
    c_f = (g * fs.p / fs.rho) ** 0.5
    un_i = float(np.dot(u_i, n))
    un_f = float(np.dot(fs.u, n))
    r_out = un_i + 2.0 * c_i / gm1
    r_in = un_f - 2.0 * c_f / gm1
    un = 0.5 * (r_out + r_in)
    c = 0.25 * gm1 * (r_out - r_in)
    if un >= 0.0:
        entropy, ut = p_i / rho_i**g, np.asarray(u_i) - un_i * n
    else:
        entropy, ut = fs.p / fs.rho**g, np.asarray(fs.u) - un_f * n
    rho = (c * c / (g * entropy)) ** (1.0 / gm1)
    return rho, ut + un * n, rho * c * c / g


class TestRiemann:
    def test_freestream_is_fixed_point(self, cfg):
        fs = freestream_state(cfg)
        rho, u, p = riemann_state(np.array([fs.rho]), np.array(fs.u)[:, None], np.array([fs.p]),
                                  fs, (0.0, 1.0, 0.0), cfg)
        assert rho[0] == fs.rho and p[0] == fs.p
        assert np.all(u[:, 0] == 0.0)

    def test_supersonic_outflow_copies_interior(self, cfg):
        fs = freestream_state(cfg)
        c = fs.sound_speed(cfg)
        u_i = np.array([[2.0 * c], [0.1], [0.0]])
        rho, u, p = riemann_state(np.array([0.9]), u_i, np.array([0.4]), fs, (1.0, 0.0, 0.0), cfg)
        assert rho[0] == 0.9 and p[0] == 0.4
        np.testing.assert_array_equal(u, u_i)

    def test_supersonic_inflow_takes_freestream(self, cfg):
        fs = freestream_state(cfg)
        c = fs.sound_speed(cfg)
        rho, u, p = riemann_state(np.array([1.1]), np.array([[-3.0 * c], [0.0], [0.0]]),
                                  np.array([fs.p]), fs, (1.0, 0.0, 0.0), cfg)
        assert rho[0] == fs.rho and p[0] == fs.p
        assert np.all(u == 0.0)

    @pytest.mark.parametrize("normal", [(1.0, 0.0, 0.0), (0.0, 0.6, 0.8)])
    def test_subsonic_outflow_matches_oracle(self, cfg, normal):
        fs = freestream_state(cfg)
        c = fs.sound_speed(cfg)
        u_i = 0.3 * c * np.asarray(normal) + np.array([0.0, 0.8, -0.6]) * 0.05 * c
        p_i = 1.01 * fs.p
        rho, u, p = riemann_state(np.array([1.0]), u_i[:, None], np.array([p_i]), fs, normal, cfg)
        o_rho, o_u, o_p = two_invariant_oracle(1.0, u_i, p_i, fs, normal, cfg.gamma)
        assert rho[0] == pytest.approx(o_rho, rel=1e-12)
        assert p[0] == pytest.approx(o_p, rel=1e-12)
        np.testing.assert_allclose(u[:, 0], o_u, rtol=1e-12, atol=1e-14)

    def test_subsonic_inflow_ignores_interior_tangential_velocity(self, cfg):
        fs = freestream_state(cfg)
        c = fs.sound_speed(cfg)
        n = (1.0, 0.0, 0.0)
        base = np.array([[-0.2 * c], [0.0], [0.0]])
        bent = np.array([[-0.2 * c], [0.3 * c], [0.0]])
        a = riemann_state(np.array([1.0]), base, np.array([fs.p]), fs, n, cfg)
        b = riemann_state(np.array([1.0]), bent, np.array([fs.p]), fs, n, cfg)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_subsonic_outflow_keeps_interior_tangential_velocity(self, cfg):
        fs = freestream_state(cfg)
        c = fs.sound_speed(cfg)
        u_i = np.array([[0.2 * c], [0.3 * c], [-0.1 * c]])
        _, u, _ = riemann_state(np.array([1.0]), u_i, np.array([fs.p]), fs, (1.0, 0.0, 0.0), cfg)
        np.testing.assert_array_equal(u[1:], u_i[1:])


@pytest.fixture(scope="module")
def fine_core():
    # height 2 puts three radial rings inside the jet radius
    return compute_metrics(generate_jet_grid(6, 10, 9, length=4.0, height=2.0))


def freestream_field(block, cfg):
    cons = freestream_state(cfg).conservative(cfg)
    q = ConservativeField.zeros(block.dims)
    q.inner[...] = cons.reshape(-1, 1, 1, 1)
    return q


class TestInlet:
    def test_flat_hat(self, cfg, fine_core):
        q = freestream_field(fine_core, cfg)
        bset = jet_boundaries(cfg)
        apply_jet_inlet(q, fine_core, bset, cfg)
        plane = q.inner[:, 0]
        r = interior(node_radius(fine_core))[0]
        inside = r <= bset.jet_radius
        assert inside.sum() > fine_core.dims[2]  # more than the axis itself
        jet = jet_state(cfg).conservative(cfg)
        assert np.all(plane[:, inside] == jet[:, None])
        assert not np.any(np.all(plane[:, ~inside] == jet[:, None], axis=0))

    def test_axis_node_holds_jet_primitives(self, cfg, fine_core):
        q = freestream_field(fine_core, cfg)
        apply_jet_inlet(q, fine_core, jet_boundaries(cfg), cfg)
        rho, mx, my, mz, _ = q.inner[:, 0, 0, 0]
        js = jet_state(cfg)
        assert rho == js.rho and my == 0.0 and mz == 0.0
        assert mx / rho == pytest.approx(1.4 * js.sound_speed(cfg), rel=1e-14)

    def test_outside_takes_farfield_rule(self, cfg, fine_core):
        q = freestream_field(fine_core, cfg)
        apply_jet_inlet(q, fine_core, jet_boundaries(cfg), cfg)
        r = interior(node_radius(fine_core))[0]
        far = r >= 1.0
        fs = freestream_state(cfg).conservative(cfg)
        assert np.all(q.inner[:, 0][:, far] == fs[:, None])


class TestCenterlineAndPeriodic:
    def test_ring_mean_sequential(self, cfg):
        block = compute_metrics(generate_jet_grid(4, 4, 5))
        q = ConservativeField.zeros(block.dims)
        q.inner[...] = 1.0
        q.inner[:, :, 1, :4] = np.array([1.0, 2.0, 3.0, 4.0])
        q.inner[:, :, 1, 4] = 1.0
        apply_centerline(q, block)
        assert np.all(q.inner[:, :, 0, :] == 2.5)

    def test_axisymmetric_ring(self, cfg, rng):
        block = compute_metrics(generate_jet_grid(4, 4, 9))
        q = ConservativeField.zeros(block.dims)
        v = rng.random((5, 4))
        q.inner[:, :, 1, :] = v[:, :, None]
        apply_centerline(q, block)
        np.testing.assert_allclose(q.inner[:, :, 0, 0], v, rtol=1e-15)
        np.testing.assert_array_equal(q.inner[:, :, 0, 3], q.inner[:, :, 0, 0])

    def test_periodic_superposition(self, small_jet_metrics, rng):
        q = ConservativeField.zeros(small_jet_metrics.dims)
        q.q[...] = rng.random(q.q.shape)
        apply_periodic(q, small_jet_metrics)
        np.testing.assert_array_equal(q.inner[..., 0], q.inner[..., -1])


class TestBoundarySet:
    def test_missing_face(self, cfg):
        js, fs = jet_state(cfg), freestream_state(cfg)
        with pytest.raises(ValueError):
            BoundarySet(js, fs, faces={"xi_lo": "inlet"})

    def test_unknown_kind(self, cfg):
        bset = jet_boundaries(cfg)
        faces = dict(bset.faces, xi_hi="wall")
        with pytest.raises(ValueError):
            BoundarySet(bset.inlet_state, bset.freestream_state, faces=faces)

    def test_partition_faces_become_interior(self, cfg, small_jet):
        from jetles.partition import build_map, local_block
        pmap = build_map(12, 13, 2, 2)
        local = local_block(small_jet, pmap, 0)
        faces = jet_boundaries(cfg).for_block(local).faces
        assert faces["xi_hi"] == INTERIOR and faces["zeta_hi"] == INTERIOR
        assert faces["eta_lo"] == CENTERLINE and faces["eta_hi"] == FARFIELD

    def test_freestream_unchanged(self, cfg, small_jet_metrics):
        fs = freestream_state(cfg)
        q = freestream_field(small_jet_metrics, cfg)
        before = q.inner.copy()
        apply_boundaries(q, small_jet_metrics, uniform_boundaries(fs), cfg)
        np.testing.assert_allclose(q.inner, before, rtol=1e-14, atol=1e-15)

    def test_inlet_only_change_with_jet(self, cfg, small_jet_metrics):
        q = freestream_field(small_jet_metrics, cfg)
        before = q.inner.copy()
        apply_boundaries(q, small_jet_metrics, jet_boundaries(cfg), cfg)
        changed = np.any(q.inner != before, axis=0)
        assert changed[0].any()
        assert not np.any(np.abs(q.inner[:, 1:] - before[:, 1:]) > 1e-14)


class TestNormals:
    def test_entrance_and_outer_normals(self, small_jet_metrics):
        b = small_jet_metrics
        n_in = face_normals(b, 0, 0)
        np.testing.assert_allclose(n_in[0], -1.0, rtol=1e-14)
        n_out = face_normals(b, 1, 1)
        xyz = b.xyz[:, :, -1, :]
        radial = np.stack([np.zeros_like(xyz[0]), xyz[1], xyz[2]])
        radial /= np.sqrt((radial**2).sum(axis=0))
        np.testing.assert_allclose(n_out, radial, atol=1e-12)

    def test_axis_face_falls_back_to_tangent(self, small_jet_metrics):
        n = face_normals(small_jet_metrics, 1, 0)
        assert np.all(np.isfinite(n))
        np.testing.assert_allclose((n**2).sum(axis=0), 1.0, rtol=1e-14)


def test_fringe_constant_is_two():
    assert FRINGE == 2
