import csv
import math

import numpy as np
import pytest

from rcls.bench import (
    ComparisonTable,
    ExperimentConfig,
    ExperimentReport,
    METHODS,
    SaCodes,
    aggregate_accuracy,
    compare_methods,
    comparison_csv,
    comparison_text,
    dump_diagnostics,
    fit_method,
    load_compare_configs,
    load_experiment_config,
    load_source,
    report_csv,
    report_text,
    run_experiment,
    stage_summary,
)
from rcls.classify import classify_residual, classify_sa
from rcls.data import Dataset, SynthSpec, normalize_columns, save_bin, synth
from rcls.errors import ConfigError, DatasetError

CLEAN = SynthSpec(C=3, ambient_dim=12, subspace_dim=2, per_class=8, seed=0)
NOISY = SynthSpec(
    C=4, ambient_dim=10, subspace_dim=3, per_class=10, noise_sigma=0.6, seed=1
)


def read_diag(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["index", "class", "value"]
    return [(int(r[0]), int(r[1]), float(r[2])) for r in rows[1:]]


# ---------------------------------------------------------------- config


def test_config_rejects_unknown_method():
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset=CLEAN, method="cnn", per_class_train=4)


def test_config_rejects_bad_counts():
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset=CLEAN, method="crc", per_class_train=4, trials=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset=CLEAN, method="crc", per_class_train=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset=CLEAN, method="crc", per_class_train=4, trials=True)
    with pytest.raises(ConfigError):
        ExperimentConfig(

            dataset=CLEAN, method="crc", per_class_train=4, projection_dim=0
        )


def test_config_rejects_bad_parameter_ranges():
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset=CLEAN, method="crc", per_class_train=4, lam=0.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset=CLEAN, method="procrc", per_class_train=4, gamma=-1.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset=CLEAN, method="sa_crc", per_class_train=4, k=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset=CLEAN, method="src", per_class_train=4, epsilon=0.0)


def test_config_requires_method_parameters():
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig(dataset=CLEAN, method="src", per_class_train=4, epsilon=None)
    assert "epsilon" in str(exc.value)
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset=CLEAN, method="crc", per_class_train=4, lam=None)
    with pytest.raises(ConfigError):
        ExperimentConfig(
            dataset=CLEAN, method="sa_procrc", per_class_train=4, gamma=None
        )
    # parameters a method does not use may be absent
    cfg = ExperimentConfig(
        dataset=CLEAN, method="crc", per_class_train=4, epsilon=None, gamma=None
    )
    assert cfg.lam > 0


def test_config_rejects_non_path_dataset():
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset=123, method="crc", per_class_train=4)


# ---------------------------------------------------------------- fitting


def grouped_train(spec, per_class_train=4):
    ds = synth(spec)
    keep = []
    for c in range(1, spec.C + 1):
        keep.extend(np.flatnonzero(ds.labels == c)[:per_class_train])
    from rcls.data import take_columns

    return normalize_columns(take_columns(ds, np.array(keep)))


def test_fit_method_rejects_ungrouped_labels():
    X = np.random.default_rng(0).standard_normal((4, 4))
    ds = Dataset(X=X, labels=[1, 2, 1, 2], C=2)
    with pytest.raises(DatasetError):
        fit_method("crc", ds)


def test_fit_method_unknown_method():
    train = grouped_train(CLEAN)
    with pytest.raises(ConfigError):
        fit_method("nope", train)


def test_fitted_sa_matches_one_shot_classifier_bitwise():
    train = grouped_train(NOISY, per_class_train=5)
    rng = np.random.default_rng(2)
    for method in ("sa_crc", "sa_procrc"):
        state = fit_method(method, train, lam=0.001, gamma=0.5, k=6)
        for _ in range(5):
            y = rng.standard_normal(train.m)
            y = y / np.linalg.norm(y)
            codes = state.compute_code(y)
            got = state.decide(codes, y)
            ref = classify_sa(
                state.projector, state.X, state.L, y, state.k, state.residual_tol
            )
            assert got.predicted_class == ref.predicted_class
            assert np.array_equal(got.scores, ref.scores)
            assert got.tie == ref.tie


# ---------------------------------------------------------------- experiments


def test_run_experiment_clean_subspaces_crc_is_perfect():
    cfg = ExperimentConfig(dataset=CLEAN, method="crc", per_class_train=4, trials=2)
    rep = run_experiment(cfg)
    assert rep.accuracies == (100.0, 100.0)
    assert rep.mean == 100.0 and rep.std == 0.0


def test_run_experiment_is_deterministic():
    cfg = ExperimentConfig(
        dataset=NOISY, method="procrc", per_class_train=5, trials=3
    )
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert a == b  # stage_seconds excluded from equality
    assert a.stage_seconds.keys() == {"fit", "code", "classify"}


def test_report_statistics_recompute():
    cfg = ExperimentConfig(dataset=NOISY, method="crc", per_class_train=5, trials=4)
    rep = run_experiment(cfg)
    arr = np.asarray(rep.accuracies)
    assert abs(rep.mean - arr.mean()) <= 1e-12
    assert abs(rep.std - arr.std(ddof=1)) <= 1e-12
    assert all(0.0 <= a <= 100.0 for a in rep.accuracies)
    assert rep.trial_seeds == (0, 1, 2, 3)


def test_trial_seeds_offset_by_base_seed():
    cfg = ExperimentConfig(
        dataset=NOISY, method="crc", per_class_train=5, trials=2, base_seed=17
    )
    rep = run_experiment(cfg)
    assert rep.trial_seeds == (17, 18)


def test_single_trial_std_is_zero():
    cfg = ExperimentConfig(dataset=NOISY, method="crc", per_class_train=5, trials=1)
    rep = run_experiment(cfg)
    assert rep.std == 0.0


def test_run_experiment_with_projection():
    cfg = ExperimentConfig(
        dataset=NOISY, method="crc", per_class_train=5, trials=2, projection_dim=6
    )
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert a == b


def test_run_experiment_class_exhaustion_fails_cleanly():
    cfg = ExperimentConfig(dataset=CLEAN, method="crc", per_class_train=8, trials=1)
    with pytest.raises(DatasetError) as exc:
        run_experiment(cfg)
    assert "trial 0" in str(exc.value)


def test_aggregate_accuracy():
    mean, std = aggregate_accuracy([90.0])
    assert (mean, std) == (90.0, 0.0)
    vals = [88.0, 92.0, 95.0]
    mean, std = aggregate_accuracy(vals)
    mu = sum(vals) / 3
    ref = math.sqrt(sum((v - mu) ** 2 for v in vals) / 2)
    assert abs(mean - mu) <= 1e-12
    assert abs(std - ref) <= 1e-12


def test_load_source_dispatch(tmp_path):
    ds = load_source(CLEAN)
    assert ds.n == CLEAN.C * CLEAN.per_class
    p_csv = tmp_path / "d.csv"
    p_bin = tmp_path / "d.rcls"
    from rcls.data import save_csv

    save_csv(ds, p_csv)
    save_bin(ds, p_bin)
    assert np.allclose(load_source(str(p_csv)).X, ds.X)
    assert np.array_equal(load_source(str(p_bin)).X, ds.X)


# ---------------------------------------------------------------- comparison


def test_compare_methods_requires_shared_setup():
    a = ExperimentConfig(dataset=CLEAN, method="crc", per_class_train=4, trials=2)
    b = ExperimentConfig(dataset=NOISY, method="procrc", per_class_train=4, trials=2)
    with pytest.raises(ConfigError) as exc:
        compare_methods([a, b])
    assert "dataset" in str(exc.value)
    c = ExperimentConfig(dataset=CLEAN, method="procrc", per_class_train=4, trials=3)
    with pytest.raises(ConfigError):
        compare_methods([a, c])
    with pytest.raises(ConfigError):
        compare_methods([])


def test_compare_methods_single_row():
    cfg = ExperimentConfig(dataset=NOISY, method="crc", per_class_train=5, trials=2)
    table = compare_methods([cfg])
    assert len(table.rows) == 1
    assert table.rows[0].method == "crc"


def test_compare_duplicate_method_rows_identical():
    cfg = ExperimentConfig(dataset=NOISY, method="crc", per_class_train=5, trials=2)
    table = compare_methods([cfg, cfg])
    assert table.rows[0] == table.rows[1]


def test_error_reduction_formula():
    cfgs = [
        ExperimentConfig(dataset=NOISY, method=m, per_class_train=5, trials=3)
        for m in ("crc", "procrc")
    ]
    table = compare_methods(cfgs)
    err_base = 100.0 - table.rows[0].mean
    assert err_base > 0.0, "noisy baseline expected to make mistakes"
    for row in table.rows:
        expected = 100.0 * (err_base - (100.0 - row.mean)) / err_base
        assert abs(row.err_reduction_pct - expected) <= 1e-12
    assert table.rows[0].err_reduction_pct == 0.0


def test_error_reduction_nan_when_baseline_perfect():
    cfg = ExperimentConfig(dataset=CLEAN, method="crc", per_class_train=4, trials=2)
    table = compare_methods([cfg])
    assert table.rows[0].mean == 100.0
    assert math.isnan(table.rows[0].err_reduction_pct)


# ---------------------------------------------------------------- rendering


def test_report_csv_round_trips_floats():
    cfg = ExperimentConfig(dataset=NOISY, method="procrc", per_class_train=5, trials=3)
    rep = run_experiment(cfg)
    text = report_csv(rep)
    lines = text.strip().split("\n")
    assert lines[0] == "method,mean,std,trials,base_seed"
    method, mean, std, trials, seed = lines[1].split(",")
    assert method == "procrc"
    assert float(mean) == rep.mean
    assert float(std) == rep.std
    assert int(trials) == 3 and int(seed) == 0


def test_report_text_contains_summary_line():
    cfg = ExperimentConfig(dataset=CLEAN, method="crc", per_class_train=4, trials=2)
    rep = run_experiment(cfg)
    text = report_text(rep)
    assert "method: crc" in text
    assert "mean +/- std: 100.00 +/- 0.00" in text


def test_comparison_renderers():
    cfg = ExperimentConfig(dataset=NOISY, method="crc", per_class_train=5, trials=2)
    table = compare_methods([cfg])
    ctext = comparison_csv(table)
    lines = ctext.strip().split("\n")
    assert lines[0] == "method,mean,std,trials,base_seed,err_reduction_pct"
    assert len(lines) == 2
    pretty = comparison_text(table)
    assert pretty.startswith("method")
    assert "crc" in pretty
    assert stage_summary({"fit": 0.5}) == "fit=0.500s"


# ---------------------------------------------------------------- diagnostics


def test_dump_diagnostics_row_counts_and_columns(tmp_path):
    train = grouped_train(NOISY, per_class_train=5)
    state = fit_method("crc", train, lam=0.001)
    y = train.X[:, 0]
    files = dump_diagnostics(state, y, tmp_path / "diag")
    assert set(files) == {"coefficients.csv", "residuals.csv", "scores.csv"}
    coeff = read_diag(files["coefficients.csv"])
    assert len(coeff) == train.n
    assert [c for _, c, _ in coeff] == list(np.repeat([1, 2, 3, 4], 5))
    resid = read_diag(files["residuals.csv"])
    scores = read_diag(files["scores.csv"])
    assert len(resid) == train.C and len(scores) == train.C
    assert [c for _, c, _ in resid] == [1, 2, 3, 4]


def test_dump_diagnostics_identity_dictionary(tmp_path):
    ds = Dataset(X=np.eye(3), labels=[1, 2, 3], C=3)
    state = fit_method("crc", ds, lam=0.001)
    y = np.array([0.0, 1.0, 0.0])
    files = dump_diagnostics(state, y, tmp_path / "diag")
    scores = read_diag(files["scores.csv"])
    best = min(scores, key=lambda row: row[2])
    assert best[1] == 2  # the atom matching y


def test_dump_diagnostics_sa_extra_files(tmp_path):
    train = grouped_train(NOISY, per_class_train=5)
    state = fit_method("sa_procrc", train, lam=0.001, gamma=0.5, k=4)
    y = train.X[:, 7]
    files = dump_diagnostics(state, y, tmp_path / "diag")
    assert "coefficients_sparse.csv" in files
    assert "coefficients_dense.csv" in files
    fused = np.array([v for _, _, v in read_diag(files["coefficients.csv"])])
    sparse = np.array([v for _, _, v in read_diag(files["coefficients_sparse.csv"])])
    dense = np.array([v for _, _, v in read_diag(files["coefficients_dense.csv"])])
    s = sparse + dense
    assert np.allclose(fused, s / np.linalg.norm(s), rtol=1e-12, atol=1e-15)
    assert abs(np.linalg.norm(fused) - 1.0) <= 1e-12


def test_diagnostics_exhibit_residual_vs_score_correction(tmp_path):
    """On the standard benchmark there are samples where the dense code's
    residual rule picks the wrong class but the fused max-score rule picks
    the right one; a single diagnostics dump shows both sides."""
    from rcls.data import split, take_columns

    spec = SynthSpec(
        C=10, ambient_dim=50, subspace_dim=5, per_class=40, noise_sigma=0.1, seed=3
    )
    ds = synth(spec)
    found = None
    for seed in range(5):
        sp = split(ds, 20, seed)
        train = normalize_columns(take_columns(ds, sp.train_indices))
        test = normalize_columns(take_columns(ds, sp.test_indices))
        state = fit_method("sa_procrc", train, lam=0.001, gamma=0.5, k=50)
        for j in range(test.n):
            y = test.X[:, j]
            true = int(test.labels[j])
            codes = state.compute_code(y)
            fused_pick = state.decide(codes, y).predicted_class
            resid_pick = classify_residual(
                state.blocks, y, codes.dense
            ).predicted_class
            if resid_pick != true and fused_pick == true:
                found = (state, y, true)
                break
        if found:
            break
    assert found is not None, "no correction event in five splits"
    state, y, true = found
    files = dump_diagnostics(state, y, tmp_path / "diag")
    resid = read_diag(files["residuals.csv"])
    scores = read_diag(files["scores.csv"])
    resid_class = min(resid, key=lambda row: row[2])[1]
    score_class = max(scores, key=lambda row: row[2])[1]
    assert resid_class != true
    assert score_class == true


# ---------------------------------------------------------------- config files


def write_cfg(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SYNTH_BLOCK = """\
synth:
  classes: 3
  ambient_dim: 12
  subspace_dim: 2
  per_class: 8
  seed: 0
per_class_train: 4
"""


def test_load_experiment_config_happy_path(tmp_path):
    p = write_cfg(
        tmp_path,
        SYNTH_BLOCK + "method: procrc\nlambda: 0.01\ngamma: 0.25\ntrials: 5\n",
    )
    cfg = load_experiment_config(p)
    assert cfg.method == "procrc"
    assert cfg.lam == 0.01
    assert cfg.gamma == 0.25
    assert cfg.trials == 5
    assert cfg.dataset == CLEAN


def test_load_experiment_config_defaults(tmp_path):
    p = write_cfg(tmp_path, SYNTH_BLOCK + "method: crc\n")
    cfg = load_experiment_config(p)
    assert cfg.trials == 10
    assert cfg.base_seed == 0
    assert cfg.lam == 0.001


def test_load_experiment_config_dataset_path(tmp_path):
    ds = synth(CLEAN)
    data = tmp_path / "d.rcls"
    save_bin(ds, data)
    p = write_cfg(
        tmp_path, f"dataset: {data}\nper_class_train: 4\nmethod: crc\n"
    )
    cfg = load_experiment_config(p)
    assert cfg.dataset == str(data)


def test_load_experiment_config_rejects_unknown_keys(tmp_path):
    p = write_cfg(tmp_path, SYNTH_BLOCK + "method: crc\nmomentum: 0.9\n")
    with pytest.raises(ConfigError) as exc:
        load_experiment_config(p)
    assert "momentum" in str(exc.value)


def test_load_experiment_config_rejects_unknown_synth_keys(tmp_path):
    p = write_cfg(
        tmp_path,
        "synth:\n  classes: 2\n  ambient_dim: 5\n  subspace_dim: 1\n"
        "  per_class: 3\n  shape: round\nper_class_train: 2\nmethod: crc\n",
    )
    with pytest.raises(ConfigError) as exc:
        load_experiment_config(p)
    assert "shape" in str(exc.value)


def test_load_experiment_config_source_exclusivity(tmp_path):
    p = write_cfg(tmp_path, SYNTH_BLOCK + "dataset: d.rcls\nmethod: crc\n")
    with pytest.raises(ConfigError):
        load_experiment_config(p)
    p2 = write_cfg(tmp_path, "per_class_train: 4\nmethod: crc\n", "c2.yaml")
    with pytest.raises(ConfigError):
        load_experiment_config(p2)


def test_load_experiment_config_missing_required(tmp_path):
    p = write_cfg(tmp_path, SYNTH_BLOCK)
    with pytest.raises(ConfigError) as exc:
        load_experiment_config(p)
    assert "method" in str(exc.value)
    p2 = write_cfg(
        tmp_path,
        "synth:\n  classes: 2\n  ambient_dim: 5\n  subspace_dim: 1\n"
        "  per_class: 3\nmethod: crc\n",
        "c2.yaml",
    )
    with pytest.raises(ConfigError) as exc:
        load_experiment_config(p2)
    assert "per_class_train" in str(exc.value)


def test_load_experiment_config_type_errors(tmp_path):
    p = write_cfg(tmp_path, SYNTH_BLOCK + "method: crc\ntrials: yes\n")
    with pytest.raises(ConfigError):
        load_experiment_config(p)
    p2 = write_cfg(tmp_path, SYNTH_BLOCK + "method: crc\nlambda: soft\n", "c2.yaml")
    with pytest.raises(ConfigError):
        load_experiment_config(p2)


def test_load_experiment_config_rejects_methods_list(tmp_path):
    p = write_cfg(tmp_path, SYNTH_BLOCK + "methods: [crc]\n")
    with pytest.raises(ConfigError):
        load_experiment_config(p)


def test_load_experiment_config_bad_yaml(tmp_path):
    p = write_cfg(tmp_path, "method: [unclosed\n")
    with pytest.raises(ConfigError):
        load_experiment_config(p)
    p2 = write_cfg(tmp_path, "- a\n- b\n", "c2.yaml")
    with pytest.raises(ConfigError):
        load_experiment_config(p2)


def test_load_compare_configs(tmp_path):
    p = write_cfg(tmp_path, SYNTH_BLOCK + "methods: [crc, procrc]\ntrials: 3\n")
    cfgs = load_compare_configs(p)
    assert [c.method for c in cfgs] == ["crc", "procrc"]
    assert all(c.trials == 3 and c.dataset == CLEAN for c in cfgs)


def test_load_compare_configs_rejects_single_method_key(tmp_path):
    p = write_cfg(tmp_path, SYNTH_BLOCK + "method: crc\n")
    with pytest.raises(ConfigError):
        load_compare_configs(p)
    p2 = write_cfg(tmp_path, SYNTH_BLOCK + "methods: []\n", "c2.yaml")
    with pytest.raises(ConfigError):
        load_compare_configs(p2)
    p3 = write_cfg(tmp_path, SYNTH_BLOCK + "methods: [crc, 5]\n", "c3.yaml")
    with pytest.raises(ConfigError):
        load_compare_configs(p3)
