import numpy as np
import pytest

from ddinverse import fem, parabolic


@pytest.fixture(scope="module")
def heat7(mesh7, decomp7):
    grid = parabolic.TimeGrid(T=4.0, nt=16, sigma=4.0)
    # tight inner tolerance: identity checks compare across marches, so the
    # per-step solver error must stay below the 1e-9 contract after nt steps
    return parabolic.HeatOperators(mesh7, decomp7, 1.0, grid, tol=1e-11)


def _interior_field(mesh, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(mesh.n_nodes)
    v[mesh.boundary_mask] = 0.0
    return v


def test_timegrid_validation():
    with pytest.raises(ValueError):
        parabolic.TimeGrid(T=4.0, nt=16, sigma=0.0)
    with pytest.raises(ValueError):
        parabolic.TimeGrid(T=4.0, nt=16, sigma=4.5)
    with pytest.raises(ValueError):
        parabolic.TimeGrid(T=4.0, nt=16, sigma=0.3)  # not a multiple of dt
    g = parabolic.TimeGrid(T=4.0, nt=16, sigma=1.0)
    assert g.window_start == 12
    assert abs(g.weights().sum() - 1.0) < 1e-14


def test_forward_zero_and_linear(heat7, mesh7):
    assert np.all(heat7.forward_global(np.zeros(mesh7.n_nodes)) == 0.0)
    p1 = _interior_field(mesh7, 1)
    p2 = _interior_field(mesh7, 2)
    lhs = heat7.forward_global(p1 + p2)
    rhs = heat7.forward_global(p1) + heat7.forward_global(p2)
    assert np.abs(lhs - rhs).max() < 1e-9


def test_eigenmode_decay_matches_step_ratio():
    from ddinverse import mesh
    m = mesh.build_mesh(28, 56)
    dec = mesh.build_subdomains(m)
    grid = parabolic.TimeGrid(T=1.0, nt=50, sigma=1.0)
    ops = parabolic.HeatOperators(m, dec, 1.0, grid, tol=1e-13)
    x, y = m.nodes.T
    phi = np.sin(np.pi * x) * np.sin(np.pi * y / 2)
    traj = ops.forward_global(phi)
    lump = ops.lumped
    ratio = np.sqrt(fem.inner_product(traj[1], traj[1], lump)
                    / fem.inner_product(traj[0], traj[0], lump))
    lam = np.pi ** 2 * 1.25
    predicted = (1 - grid.dt * lam / 2) / (1 + grid.dt * lam / 2)
    assert abs(ratio - predicted) <= 0.02 * predicted


def test_duality_every_level(heat7, mesh7):
    lump = heat7.lumped
    for seed in range(5):
        phi = _interior_field(mesh7, 100 + seed)
        om = _interior_field(mesh7, 200 + seed)
        F = heat7.forward_global(phi)
        B = heat7.adjoint_global(om)
        scale = (np.sqrt(fem.inner_product(phi, phi, lump))
                 * np.sqrt(fem.inner_product(om, om, lump)))
        for k in range(heat7.grid.nt + 1):
            lhs = fem.inner_product(F[k], om, lump)
            rhs = fem.inner_product(phi, B[heat7.grid.nt - k], lump)
            assert abs(lhs - rhs) <= 1e-9 * scale


def test_time_reversal_exact(heat7, mesh7):
    om = _interior_field(mesh7, 9)
    B = heat7.adjoint_global(om)
    F = heat7.forward_global(om)
    # the backward solve is the forward march read in reverse, step by step
    assert np.array_equal(B[::-1], F)


def test_local_zero_and_duality(heat7, mesh7, decomp7):
    zero = np.zeros(mesh7.n_nodes)
    assert np.all(heat7.forward_local(0, zero) == 0.0)
    i = 0
    loc = heat7.locals[i]
    w_box = np.zeros(mesh7.n_nodes)
    w_box[loc.nodes] = loc.lumped
    for seed in range(5):
        phi = _interior_field(mesh7, 300 + seed)
        om = _interior_field(mesh7, 400 + seed)
        F = heat7.forward_local(i, phi)
        B = heat7.adjoint_local(i, om)
        scale = (np.sqrt(fem.inner_product(phi, phi, w_box))
                 * np.sqrt(fem.inner_product(om, om, w_box)) + 1e-30)
        for k in range(0, heat7.grid.nt + 1, 4):
            lhs = fem.inner_product(F[k], om, w_box)
            rhs = fem.inner_product(phi, B[heat7.grid.nt - k], w_box)
            assert abs(lhs - rhs) <= 1e-9 * scale


def test_local_consistency(heat7, mesh7, decomp7):
    phi = _interior_field(mesh7, 77)
    F = heat7.forward_global(phi)
    for i in range(4):
        trace = F[:, decomp7.interfaces[i]]
        local = heat7.forward_local(i, phi, trace)
        box = decomp7.masks[i]
        assert np.abs(local[:, box] - F[:, box]).max() < 1e-9


def test_local_adjoint_consistency_with_trace(heat7, mesh7, decomp7):
    om = _interior_field(mesh7, 55)
    B = heat7.adjoint_global(om)
    for i in (0, 3):
        trace = B[:, decomp7.interfaces[i]]
        local = heat7.adjoint_local(i, om, trace)
        box = decomp7.masks[i]
        assert np.abs(local[:, box] - B[:, box]).max() < 1e-9


def test_accumulate_zero(heat7, mesh7):
    r = np.zeros((heat7.grid.nt + 1, mesh7.n_nodes))
    assert np.all(heat7.accumulate(0, r) == 0.0)


def test_accumulate_single_step_window(mesh7, decomp7):
    grid = parabolic.TimeGrid(T=4.0, nt=16, sigma=0.25)
    ops = parabolic.HeatOperators(mesh7, decomp7, 1.0, grid)
    r0 = _interior_field(mesh7, 5)
    r = np.tile(r0, (grid.nt + 1, 1))
    acc = ops.accumulate(0, r)
    # constant-in-time residual over one trailing step: half a step of the
    # aged value plus half a step of the fresh one
    adj = ops.adjoint_local(0, r0)
    expected = 0.5 * grid.dt * (adj[1] + adj[0])
    scale = np.abs(expected).max()
    assert np.abs(acc - expected).max() <= 1e-8 * scale


def test_accumulate_matches_quadrature_of_solves(mesh7, decomp7):
    grid = parabolic.TimeGrid(T=4.0, nt=16, sigma=4.0)
    ops = parabolic.HeatOperators(mesh7, decomp7, 1.0, grid)
    rng = np.random.default_rng(13)
    r = rng.standard_normal((grid.nt + 1, mesh7.n_nodes))
    acc = ops.accumulate(0, r)
    w = grid.weights()
    naive = np.zeros(mesh7.n_nodes)
    for k in range(grid.nt + 1):
        adj = ops.adjoint_local(0, r[k])
        naive += w[k] * adj[grid.nt - k]
    assert np.abs(acc - naive).max() <= 1e-8 * np.abs(naive).max()


def test_unconditional_stability(heat7, mesh7):
    phi = _interior_field(mesh7, 19)
    traj = heat7.forward_global(phi)
    lump = heat7.lumped
    norms = [fem.inner_product(u, u, lump) for u in traj]
    for a, b in zip(norms, norms[1:]):
        assert b <= a * (1 + 1e-12)


def test_second_order_in_time(mesh7, decomp7):
    x, y = mesh7.nodes.T
    phi = np.sin(np.pi * x) * np.sin(np.pi * y / 2)
    lump = fem.lumped_mass(mesh7)

    def final(nt):
        grid = parabolic.TimeGrid(T=0.5, nt=nt, sigma=0.5)
        ops = parabolic.HeatOperators(mesh7, decomp7, 1.0, grid, tol=1e-13)
        return ops.forward_global(phi)[-1]

    ref = final(2048)
    errs = []
    for nt in (16, 32):
        d = final(nt) - ref
        errs.append(np.sqrt(fem.inner_product(d, d, lump)))
    assert 4 * 0.8 <= errs[0] / errs[1] <= 4 * 1.2
