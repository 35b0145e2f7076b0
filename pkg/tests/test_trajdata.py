import numpy as np
import pytest
from hypothesis import given, strategies as st

from l1dpc.experiments import example_lti, fig1_dictionary, fig3_dictionary
from l1dpc.simcore import ExcitationSpec, collect
from l1dpc.trajdata import (DataDictionary, TrajectoryBank, build_dictionary, check_full_row_rank,
                            check_gpe, extract_regressor, read_trajectory_csv, unstack_column,
                            write_trajectory_csv)
from oracles import lti_rollout


def io_bank(T, m=1, p=1, records=1, seed=0):
    rng = np.random.default_rng(seed)
    return TrajectoryBank.from_arrays("io", [rng.standard_normal((m, T)) for _ in range(records)],
                                      [rng.standard_normal((p, T)) for _ in range(records)])


def exact_lti_bank(T, seed=0):
    plant = example_lti()
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1, 1, (1, T))
    y, _ = lti_rollout(plant.A, plant.B, plant.C, plant.D, rng.uniform(-1, 1, 2), u.T)
    return TrajectoryBank.from_arrays("io", [u], [y.T])


def test_one_column_per_record_is_stacked_record():
    bank = io_bank(4, m=2, p=1)
    dd = build_dictionary(bank, 2, 2, "one_column_per_record")
    rec = bank.records[0]
    assert dd.n_cols == 1
    expected = np.concatenate([rec.u[:, :2].T.reshape(-1), rec.y[:, :2].T.reshape(-1),
                               rec.u[:, 2:].T.reshape(-1), rec.y[:, 2:].T.reshape(-1)])
    np.testing.assert_array_equal(dd.matrix[:, 0], expected)


def test_hankel_window_count_and_offsets():
    bank = io_bank(6)
    dd = build_dictionary(bank, 2, 2)
    assert dd.n_cols == 3
    rec = bank.records[0]
    for j in range(3):
        parts = unstack_column(dd, j)
        np.testing.assert_array_equal(parts["u_p"], rec.u[:, j:j + 2])
        np.testing.assert_array_equal(parts["y"], rec.y[:, j + 2:j + 4])
    assert dd.provenance == ((0, 0), (0, 1), (0, 2))


def test_state_space_fig3_shape():
    dd = fig3_dictionary()
    assert dd.matrix.shape == (3, 20)
    assert (dd.n_w, dd.n_u, dd.n_y) == (1, 1, 1)
    np.testing.assert_allclose(dd.Y[0], 2 * dd.W[0] ** 2 + 2 * dd.U[0] ** 2 - 1, atol=1e-15)


def test_dimension_bookkeeping_io():
    dd = build_dictionary(io_bank(10, m=2, p=3), 3, 2)
    assert dd.n_rows == (2 + 3) * 5
    assert (dd.n_w, dd.n_u, dd.n_y) == (15, 4, 6)
    assert dd.window_length == 5


def test_build_errors():
    with pytest.raises(ValueError):
        build_dictionary(io_bank(3), 2, 2)
    with pytest.raises(ValueError):
        build_dictionary(io_bank(5), 2, 2, "one_column_per_record")
    with pytest.raises(ValueError):
        TrajectoryBank.from_arrays("io", [], [])


def test_gpe_exact_lti():
    dd = build_dictionary(exact_lti_bank(33), 2, 2)
    assert dd.n_cols == 30
    g = check_gpe(dd, 2)
    assert (g.holds, g.rank, g.required) == (True, 6, 6)
    assert not check_full_row_rank(dd)


def test_gpe_fails_when_data_is_cut():
    dd = build_dictionary(exact_lti_bank(33), 2, 2)
    M = np.array(dd.matrix[:, :6])
    M[:, 0] = 0.0
    g = check_gpe(DataDictionary(M, dd.n_w, dd.n_u, dd.n_y, "io", 1, 1, 2, 2), 2)
    assert not g.holds and g.rank < 6


def test_full_row_rank_examples():
    rng = np.random.default_rng(1)
    M = np.hstack([np.eye(3), rng.standard_normal((3, 3))])
    assert check_full_row_rank(DataDictionary.from_matrix(M, 1, 1, 1))
    M2 = np.vstack([M[:2], M[1]])
    assert not check_full_row_rank(DataDictionary.from_matrix(M2, 1, 1, 1))
    assert check_full_row_rank(fig1_dictionary())
    assert check_full_row_rank(fig3_dictionary())


def test_extract_regressor():
    np.testing.assert_array_equal(extract_regressor([2.0], [3.0], 1), [2.0, 3.0])
    np.testing.assert_array_equal(extract_regressor(np.zeros((1, 2)), np.zeros((1, 2)), 2), np.zeros(4))
    with pytest.raises(ValueError):
        extract_regressor([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 2)


def test_regressor_matches_dictionary_w_rows():
    bank = io_bank(8, m=2, p=2, seed=4)
    dd = build_dictionary(bank, 2, 3)
    rec = bank.records[0]
    for j in range(dd.n_cols):
        xi = extract_regressor(rec.u[:, j:j + 2], rec.y[:, j:j + 2], 2)
        np.testing.assert_array_equal(xi, dd.W[:, j])


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(0, 999))
def test_hankel_overlap_and_partition(m, p, Np, N, seed):
    bank = io_bank(Np + N + 3, m, p, seed=seed)
    dd = build_dictionary(bank, Np, N)
    # row blocks reassemble the matrix
    np.testing.assert_array_equal(np.vstack([dd.W, dd.U, dd.Y]), dd.matrix)
    np.testing.assert_array_equal(dd.Z, dd.matrix[:dd.n_z])
    # consecutive windows overlap in L-1 steps
    for j in range(dd.n_cols - 1):
        a, b = unstack_column(dd, j), unstack_column(dd, j + 1)
        ua = np.hstack([a["u_p"], a["u"]])
        ub = np.hstack([b["u_p"], b["u"]])
        np.testing.assert_array_equal(ua[:, 1:], ub[:, :-1])


@given(st.integers(1, 4), st.integers(0, 999))
def test_one_column_round_trip(records, seed):
    bank = io_bank(3, m=1, p=2, records=records, seed=seed)
    dd = build_dictionary(bank, 1, 2, "one_column_per_record")
    for j, rec in enumerate(bank.records):
        parts = unstack_column(dd, j)
        np.testing.assert_array_equal(np.hstack([parts["u_p"], parts["u"]]), rec.u)
        np.testing.assert_array_equal(np.hstack([parts["y_p"], parts["y"]]), rec.y)


def test_dictionary_is_read_only_and_json_round_trip():
    dd = fig3_dictionary()
    with pytest.raises(ValueError):
        dd.matrix[0, 0] = 1.0
    back = DataDictionary.from_json(dd.to_json())
    np.testing.assert_array_equal(back.matrix, dd.matrix)
    assert back.provenance == dd.provenance and back.setting == dd.setting


@pytest.mark.parametrize("setting", ["io", "state_space"])
def test_csv_round_trip(tmp_path, setting):
    if setting == "io":
        bank = io_bank(5, m=2, p=1, records=2)
    else:
        from l1dpc.simcore import ScalarQuadraticPlant
        bank = collect(ScalarQuadraticPlant(), ExcitationSpec(seed=1, horizon=3, records=2))
    path = tmp_path / "traj.csv"
    write_trajectory_csv(bank, path)
    back = read_trajectory_csv(path, setting)
    for r1, r2 in zip(bank.records, back.records):
        np.testing.assert_array_equal(r1.u, r2.u)
        np.testing.assert_array_equal(r1.y, r2.y)


def test_csv_rejects_gaps(tmp_path):
    path = tmp_path / "gap.csv"
    path.write_text("record,k,u1,y1\n0,0,1,2\n0,2,1,2\n")
    with pytest.raises(ValueError, match="gaps"):
        read_trajectory_csv(path, "io")
