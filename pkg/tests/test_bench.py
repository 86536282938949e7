from gridloc.bench import run_benchmark


def test_schema_is_stable_across_reps():
    keys = None
    for reps in (1, 3):
        table = run_benchmark([(4, 5, 5)], reps=reps, cell_px=5)
        assert len(table) == 1
        row = table[0]
        if keys is None:
            keys = set(row)
        assert set(row) == keys
        assert row["reps"] == reps
        assert row["grid"] == "4x5x5"
        assert row["sm_mean_s"] > 0
        assert row["aml_mean_s"] > 0


def test_larger_grid_costs_more():
    table = run_benchmark([(4, 5, 5), (4, 11, 11)], reps=5, cell_px=5)
    assert table[1]["sm_mean_s"] > table[0]["sm_mean_s"]
