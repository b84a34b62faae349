import numpy as np
import pytest

from pose_boost import ops
from pose_boost.cells import CcgUnit, DirectionParams, glorot
from pose_boost.errors import CheckpointError, ConfigError, PoseBoostError, ShapeError
from pose_boost.lstd import LstdParams, boost, needs_projection, reassemble, split_channels
from pose_boost.skeleton import Edge, SkeletonGraph, variant
from pose_boost.tensor import Tensor, precision

# --- helpers ---------------------------------------------------------------

TINY = SkeletonGraph(
    names=("base", "a1", "a2", "b1", "b2"),
    edges=(
        Edge(0, 1),
        Edge(1, 2),
        Edge(0, 3),
        Edge(3, 4),
        Edge(1, 3, "symmetrical"),
        Edge(2, 4, "symmetrical"),
    ),
    root=0,
    name="tiny5",
)


def _features(rng, joints=5, c=2, size=4) -> Tensor:
    return Tensor(rng.normal(size=(size, size, joints * c)))


def _params(rng, kind, *, joints=5, c=2, total=None, directions=("forward", "backward"), recurrent=True):
    return LstdParams.init(
        rng,
        joints=joints,
        channels=c,
        total_channels=total or joints * c,
        cell_kind=kind,
        directions=directions,
        recurrent=recurrent,
    )


def _permute_groups(F: Tensor, inv: list[int], c: int) -> Tensor:
    """New channel group k holds old group inv[k]."""
    return reassemble([ops.slice_channels(F, j * c, (j + 1) * c) for j in inv])


def _permute_params(params: LstdParams, inv: list[int]) -> LstdParams:
    c = params.channels
    idx = np.concatenate([np.arange(j * c, (j + 1) * c) for j in inv])

    def direction(p: DirectionParams | None) -> DirectionParams | None:
        if p is None or p.ccg is None:
            return p
        units = [p.ccg.units[j] for j in inv]
        units = [CcgUnit(u.W_Hp, Tensor(u.W_Fp.data[:, :, idx, :]), u.b_p) for u in units]
        return DirectionParams(p.cell, type(p.ccg)(units, p.ccg.omega))

    return LstdParams(params.joints, c, direction(params.forward), direction(params.backward), params.projection)


# --- channel groups --------------------------------------------------------


def test_desk_stack_splits_into_joint_groups():
    F = Tensor(np.random.default_rng(0).normal(size=(16, 16, 64)))
    groups = split_channels(F, joints=16, c=4)
    assert len(groups) == 16
    assert all(g.shape == (16, 16, 4) for g in groups)
    np.testing.assert_array_equal(groups[3].data, F.data[..., 12:16])


def test_projection_needed_when_widths_differ():
    assert needs_projection(10, 4, 2)
    assert not needs_projection(8, 4, 2)
    rng = np.random.default_rng(1)
    F = Tensor(rng.normal(size=(4, 4, 10)))
    with pytest.raises(ShapeError):
        split_channels(F, 4, 2)
    groups = split_channels(F, 4, 2, glorot(rng, (1, 1, 10, 8)))
    assert [g.shape for g in groups] == [(4, 4, 2)] * 4


def test_unneeded_projection_rejected():
    rng = np.random.default_rng(2)
    with pytest.raises(ShapeError):
        split_channels(Tensor(rng.normal(size=(4, 4, 8))), 4, 2, glorot(rng, (1, 1, 8, 8)))


def test_single_joint_group_is_whole_stack():
    F = Tensor(np.ones((4, 4, 3)))
    (only,) = split_channels(F, 1, 3)
    np.testing.assert_array_equal(only.data, F.data)


def test_empty_split_rejected():
    with pytest.raises(ValueError):
        split_channels(Tensor(np.ones((2, 2, 2))), 0, 2)


def test_init_adds_projection_only_when_needed():
    rng = np.random.default_rng(3)
    assert _params(rng, "convlstm").projection is None
    projected = _params(rng, "convlstm", total=12)
    assert projected.projection.shape == (1, 1, 12, 10)


# --- boosting --------------------------------------------------------------


@pytest.mark.parametrize("mode", ["none", "passthrough"])
def test_passthrough_reassembles_exactly(mode):
    rng = np.random.default_rng(4)
    F = _features(rng)
    params = _params(rng, "convlstm", recurrent=False)
    result = boost(F, variant(TINY, "bidirectional"), params, mode)
    np.testing.assert_array_equal(result.stack.data, F.data)
    assert result.gate(0) is None


def test_plain_boost_changes_features_and_keeps_shape():
    with precision("float64"):
        rng = np.random.default_rng(5)
        F = _features(rng)
        result = boost(F, variant(TINY, "bidirectional"), _params(rng, "convlstm"), "fb", "convlstm")
    assert result.stack.shape == F.shape
    assert not np.allclose(result.stack.data, F.data)
    assert result.gates_backward and all(g is None for g in result.gates_backward)


def test_forward_only_variant_has_no_backward_pass():
    with precision("float64"):
        rng = np.random.default_rng(6)
        params = _params(rng, "convlstm_ccg", directions=("forward",))
        assert params.backward is None
        result = boost(_features(rng), variant(TINY, "graphical_forward_only"), params, "fb_plus")
    assert result.gates_backward == []
    assert result.gate(2) is not None


def test_agreeing_prediction_opens_every_gate():
    with precision("float64"):
        rng = np.random.default_rng(7)
        params = _params(rng, "convlstm_ccg")
        # P_j = tanh(F_j): no context term, the centre tap copies joint j's own channels
        for direction in (params.forward, params.backward):
            for j, unit in enumerate(direction.ccg.units):
                unit.W_Hp.data[:] = 0.0
                unit.b_p.data[:] = 0.0
                unit.W_Fp.data[:] = 0.0
                for ch in range(2):
                    unit.W_Fp.data[1, 1, 2 * j + ch, ch] = 1.0
        result = boost(_features(rng), variant(TINY, "bidirectional"), params, "fb_plus")
    for j in range(5):
        np.testing.assert_array_equal(result.gate(j).data, 1.0)


def test_gated_boost_gates_lie_in_unit_interval():
    with precision("float64"):
        rng = np.random.default_rng(8)
        result = boost(_features(rng), variant(TINY, "bidirectional"), _params(rng, "convlstm_ccg"), "fb_plus")
    for j in range(5):
        g = result.gate(j).data
        assert np.all((g > 0.0) & (g <= 1.0))


@pytest.mark.parametrize(
    "mode, kind",
    [("zoom", "convlstm"), ("fb_plus", "convgru"), ("fb", "convlstm_ccg")],
)
def test_mode_and_cell_mismatches(mode, kind):
    rng = np.random.default_rng(9)
    with pytest.raises(ConfigError):
        boost(_features(rng), variant(TINY, "bidirectional"), _params(rng, "convlstm"), mode, kind)


def test_joint_count_mismatch():
    rng = np.random.default_rng(10)
    params = _params(rng, "convlstm", joints=4)
    with pytest.raises(PoseBoostError):
        boost(_features(rng, joints=4), variant(TINY, "bidirectional"), params, "fb")


def test_boost_without_recurrent_weights():
    rng = np.random.default_rng(11)
    with pytest.raises(PoseBoostError):
        boost(_features(rng), variant(TINY, "bidirectional"), _params(rng, "convlstm", recurrent=False), "fb")


def test_named_round_trip_and_missing_projection():
    rng = np.random.default_rng(12)
    params = _params(rng, "convlstm_ccg", total=12)
    named = params.named()
    assert "proj.W" in named
    assert "cell.fwd.W_Ho" in named and "ccg.bwd.unit4.b_p" in named
    kwargs = dict(joints=5, channels=2, total_channels=12, cell_kind="convlstm_ccg")
    rebuilt = LstdParams.from_named(named, **kwargs)
    assert rebuilt.named().keys() == named.keys()
    assert rebuilt.projection is params.projection
    del named["proj.W"]
    with pytest.raises(CheckpointError):
        LstdParams.from_named(named, **kwargs)


# --- relabelling -----------------------------------------------------------


@pytest.mark.parametrize("perm", [[4, 3, 2, 1, 0], [2, 0, 4, 1, 3], [0, 3, 4, 1, 2]])
@pytest.mark.parametrize("mode, kind", [("fb", "convlstm"), ("fb_plus", "convlstm_ccg")])
def test_relabelling_permutes_outputs(perm, mode, kind):
    inv = [int(j) for j in np.argsort(perm)]
    with precision("float64"):
        rng = np.random.default_rng(13)
        F = _features(rng)
        params = _params(rng, kind)
        before = boost(F, variant(TINY, "bidirectional"), params, mode, kind)
        after = boost(
            _permute_groups(F, inv, 2),
            variant(TINY.relabel(perm), "bidirectional"),
            _permute_params(params, inv),
            mode,
            kind,
        )
    for old, new in enumerate(perm):
        if kind == "convlstm":
            # at most two linked units per joint, so the context means are order-free
            np.testing.assert_array_equal(after.outputs[new].data, before.outputs[old].data)
        else:
            np.testing.assert_allclose(after.outputs[new].data, before.outputs[old].data, rtol=1e-12, atol=1e-14)
