"""Command-line entry point: ``motionlab <command> [options]``.

Every command writes only inside its ``--out`` directory. Options may also
come from a TOML file given with ``--config``: top-level keys apply to every
command and a table named after the command overrides them; explicit flags
override both. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.
"""

import argparse
from importlib import resources
import os
from pathlib import Path
import sys
import warnings

import numpy as np

from . import __version__, store, workflows
from .errors import BadInterval, DataError, MotionLabError, NumericalError
from .motion import (
    RateFunction,
    Warping,
    align_tsrvf,
    compute_tsrvf,
    cumulative_rate,
    karcher_mean,
    rate_from_warping,
    scaled_warping,
)
from .rate_model import RateGP, fit_rate_gp, rate_band
from .sir import sequence_coords, sir_directions, window_indices
from .skeleton import save_sequence
from .sphere import posture_distance
from .stats import Hyper, MotionDistribution, default_hyper, fit_map, fit_mle
from .synth import class_template, load_spec, reference_sequence, synthesize_instance

SEED_ENV = "MOTIONLAB_SEED"
EXAMPLE_SPEC = "example_spec.toml"

DEFAULTS = {
    "L": 100,
    "h": None,
    "dp_grid": None,
    "jobs": 1,
    "delta": workflows.DEFAULT_DELTA,
    "B": None,
    "k": workflows.BAND_K,
    "noise_var": 1e-2,
    "amplitude2": None,
    "lengthscale": None,
    "grid_points": 101,
    "method": "map",
    "lambda2": 1.0,
    "max_iter": 200,
    "tol": 1e-8,
    "n_eigs": 2,
    "s_values": [-1.0, -0.5, 0.0, 0.5, 1.0],
    "scale": "unit",
    "train_fraction": 0.8,
    "percentiles": [10.0, 50.0, 90.0],
}
COMMAND_DEFAULTS = {"pipeline": {"max_iter": 50, "bp_delta": 0.1}}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- option resolution ---------------------------------------------------------------

def _load_config(path):
    if path is None:
        return {}
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"{path}: {exc}") from None


def _norm_keys(d):
    return {k.replace("-", "_"): v for k, v in d.items() if not isinstance(v, dict)}


def resolve(args):
    """Fill unset options from the config file, then from ``DEFAULTS``."""
    cfg = _load_config(args.config)
    merged = _norm_keys(cfg)
    merged.update(_norm_keys(cfg.get(args.command, {})))
    defaults = {**DEFAULTS, **COMMAND_DEFAULTS.get(args.command, {})}
    for key, value in vars(args).items():
        if value is None or value is False:
            if key in merged:
                setattr(args, key, merged[key])
            elif value is None and key in defaults:
                setattr(args, key, defaults[key])
    if getattr(args, "seed", "absent") is None:
        env = os.environ.get(SEED_ENV)
        if env is not None:
            try:
                args.seed = int(env)
            except ValueError:
                raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    _validate(args)
    return args


def _check(cond, message):
    if not cond:
        raise UsageError(message)


def _validate(a):
    g = lambda k: getattr(a, k, None)  # noqa: E731
    if g("L") is not None:
        _check(int(a.L) >= 8, "--L must be at least 8")
    if g("dp_grid") is not None:
        _check(int(a.dp_grid) >= 8, "--dp-grid must be at least 8")
    if g("jobs") is not None:
        _check(int(a.jobs) >= 1, "--jobs must be at least 1")
    for k in ("h", "delta", "bp_delta", "lambda2", "lengthscale", "amplitude2", "tol"):
        if g(k) is not None:
            _check(float(g(k)) > 0, f"--{k.replace('_', '-')} must be positive")
    for k in ("noise_var", "k"):
        if g(k) is not None:
            _check(float(g(k)) >= 0, f"--{k.replace('_', '-')} must be non-negative")
    for k in ("B", "n_eigs", "max_iter", "grid_points"):
        if g(k) is not None:
            _check(int(g(k)) >= 1, f"--{k.replace('_', '-')} must be at least 1")
    if g("train_fraction") is not None:
        _check(0 < float(a.train_fraction) < 1, "--train-fraction must lie in (0, 1)")
    if g("percentiles") is not None:
        _check(all(0 <= p <= 100 for p in a.percentiles), "--percentiles must lie in [0, 100]")
    if g("method") is not None:
        _check(a.method in ("mle", "map"), "--method must be mle or map")
    if g("scale") is not None:
        _check(a.scale in ("unit", "sd"), "--scale must be unit or sd")


# -- helpers ------------------------------------------------------------------------------

def _out(args, *parts):
    path = Path(args.out).joinpath(*parts)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _plots(args):
    return not args.no_plots


def _label(name, seq):
    return seq.label if seq.label is not None else name.rsplit("_", 1)[0]


def _motions(path, args, label=None):
    names, seqs = store.load_motions(path, int(args.L), args.h)
    if label is not None:
        keep = [i for i, (n, s) in enumerate(zip(names, seqs)) if _label(n, s) == label]
        if not keep:
            raise DataError(f"{path}: no sequences labelled {label!r}")
        names, seqs = [names[i] for i in keep], [seqs[i] for i in keep]
    return names, seqs


def _read_rates(path):
    header, vals = store.read_table(path)
    if header[0] != "t" or vals.shape[1] < 2:
        raise DataError(f"{path}: expected columns t, <rate>...")
    grid = vals[:, 0]
    return header[1:], [RateFunction(grid, vals[:, j]) for j in range(1, vals.shape[1])]


def _matching(names, rate_names, what):
    if list(names) != list(rate_names):
        raise DataError(f"{what}: sequence names do not match the rate table columns")


def _window_means(seqs, window, model=None):
    if model is not None:
        return np.asarray(model.means)[window]
    data = np.stack([s.postures[window] for s in seqs])
    return np.stack([fit_mle(data[:, j]).mean for j in range(len(window))])


def _t_star(args):
    if args.t_star is not None:
        return float(args.t_star)
    if args.bottleneck is not None:
        return float(store.load_json(args.bottleneck)["t_star"])
    raise UsageError("give --t-star or --bottleneck")


def _json_floats(a):
    return np.asarray(a, dtype=float).tolist()


# -- commands -------------------------------------------------------------------------------

def cmd_synth(a):
    spec_path = a.spec if a.spec is not None else resources.files("motionlab") / "data" / EXAMPLE_SPEC
    spec = load_spec(spec_path)
    if a.seed is not None:
        spec.seed = int(a.seed)
    seq_dir, ref_dir = _out(a, "sequences"), _out(a, "references")
    grid = np.linspace(0.0, 1.0, 101)
    entries, planted = [], {"t": grid}
    for k, cls in enumerate(spec.classes):
        W = class_template(spec, k)
        save_sequence(reference_sequence(spec, k), ref_dir / f"{cls.label}.json")
        for i in range(spec.per_class):
            inst = synthesize_instance(spec, k, i, W)
            name = f"{cls.label}_{i:03d}"
            save_sequence(inst.skeleton, seq_dir / f"{name}.json")
            t_dense, _ = inst.gamma
            planted[name] = np.interp(grid, t_dense, inst.log_rate)
            entries.append({"file": f"sequences/{name}.json", "label": cls.label, "class": k, "instance": i,
                            "duration": float(inst.skeleton.duration)})
    store.write_columns(Path(a.out) / "planted_rates.csv", planted)
    store.dump_json({"spec": spec.to_dict(), "sequences": entries,
                     "references": {c.label: f"references/{c.label}.json" for c in spec.classes}},
                    Path(a.out) / "manifest.json")


def cmd_convert(a):
    names, seqs = _motions(a.input, a)
    out = _out(a, "postures")
    for n, s in zip(names, seqs):
        store.save_postures(s, out / f"{n}.json")


def cmd_dist(a):
    names, seqs = _motions(a.input, a)
    out = _out(a)
    Y = workflows.common_reference(seqs)
    D = workflows.distance_matrix(seqs, seqs, Y, a.dp_grid, int(a.jobs))
    np.fill_diagonal(D, 0.0)  # a motion is at distance zero from itself
    store.write_csv(out / "distances.csv", ["name"] + names, ([n] + list(row) for n, row in zip(names, D)))
    labels = [_label(n, s) for n, s in zip(names, seqs)]
    classes, T = workflows.class_distance_table(D, labels)
    store.write_csv(out / "class_table.csv", ["class"] + classes, ([c] + list(row) for c, row in zip(classes, T)))
    if _plots(a):
        from . import plotting
        plotting.distance_matrix(D, names, out / "distances.png")


def cmd_classify(a):
    out = _out(a)
    if a.train is not None and a.test is not None:
        tr_names, train = _motions(a.train, a)
        te_names, test = _motions(a.test, a)
    elif a.input is not None:
        names, seqs = _motions(a.input, a)
        labels = [_label(n, s) for n, s in zip(names, seqs)]
        seed = 0 if a.seed is None else int(a.seed)
        tr, te = workflows.stratified_split(labels, float(a.train_fraction), seed)
        tr_names, train = [names[i] for i in tr], [seqs[i] for i in tr]
        te_names, test = [names[i] for i in te], [seqs[i] for i in te]
    else:
        raise UsageError("give --input, or both --train and --test")
    tr_labels = [_label(n, s) for n, s in zip(tr_names, train)]
    te_labels = [_label(n, s) for n, s in zip(te_names, test)]
    res = workflows.classify_1nn(train, tr_labels, test, te_labels, dp_grid=a.dp_grid, jobs=int(a.jobs))
    rows = [[n, t, p, tr_names[j], res.distances[i, j]]
            for i, (n, t, p, j) in enumerate(zip(te_names, te_labels, res.predicted, res.nearest))]
    store.write_csv(out / "predictions.csv", ["name", "label", "predicted", "nearest", "distance"], rows)
    store.write_csv(out / "test_train_distances.csv", ["name"] + tr_names,
                    ([n] + list(row) for n, row in zip(te_names, res.distances)))
    classes = sorted(set(tr_labels) | set(te_labels))
    confusion = [[sum(1 for t, p in zip(te_labels, res.predicted) if t == ct and p == cp) for cp in classes]
                 for ct in classes]
    store.dump_json({"accuracy": res.accuracy, "n_train": len(train), "n_test": len(test), "classes": classes,
                     "confusion": confusion, "train": tr_names, "test": te_names}, out / "classify.json")
    if _plots(a) and len(test):
        from . import plotting
        plotting.distance_matrix(res.distances, te_names, out / "test_train_distances.png",
                                 "Test-to-train distance")


def cmd_align(a):
    out = _out(a)
    mov = store.load_motion(a.moving, int(a.L), a.h)
    ref = store.load_motion(a.reference, int(a.L), a.h)
    Y = karcher_mean(ref.postures)
    al = align_tsrvf(compute_tsrvf(mov, Y), compute_tsrvf(ref, Y), a.dp_grid, ref.grid)
    delta = scaled_warping(al.warping, mov.duration, ref.duration)
    rate = rate_from_warping(al.warping, mov.duration, ref.duration)
    store.write_columns(out / "warping.csv", {"t": ref.grid, "gamma": al.warping.values, "delta": delta,
                                              "rate": rate.values})
    store.dump_json({"distance": al.distance, "lattice_cost": al.lattice_cost,
                     "duration_moving": mov.duration, "duration_reference": ref.duration}, out / "alignment.json")
    if _plots(a):
        from . import plotting
        plotting.warping(ref.grid, al.warping.values, rate.values, out / "warping.png")


def cmd_rates(a):
    out = _out(a)
    names, seqs = _motions(a.input, a, a.label)
    ref = store.load_motion(a.reference, int(a.L), a.h)
    Y = karcher_mean(ref.postures)
    recs = workflows.rate_analysis(seqs, ref, Y, a.dp_grid)
    grid = ref.grid
    store.write_columns(out / "rates.csv", {"t": grid, **{n: r.rate.values for n, r in zip(names, recs)}})
    store.write_columns(out / "warpings.csv", {"t": grid, **{n: r.warping.values for n, r in zip(names, recs)}})
    mean = workflows.mean_rate([r.rate for r in recs])
    store.write_columns(out / "mean_rate.csv", {"t": grid, "mean": mean.values})
    store.dump_json({"reference": Path(a.reference).name, "reference_duration": ref.duration,
                     "distances": {n: r.distance for n, r in zip(names, recs)},
                     "durations": {n: s.duration for n, s in zip(names, seqs)}}, out / "rates.json")
    norm_dir = _out(a, "normalized")
    for n, s in zip(names, workflows.rate_normalized(seqs, recs)):
        store.save_postures(s, norm_dir / f"{n}.json")
    if _plots(a):
        from . import plotting
        plotting.rates(grid, [r.rate.values for r in recs], mean.values, out / "rates.png")


def cmd_bottleneck(a):
    out = _out(a)
    names, rates = _read_rates(a.rates)
    warpings = None
    if a.strict:
        if a.warpings is None:
            raise UsageError("--strict needs --warpings")
        _, vals = store.read_table(a.warpings)
        warpings = [Warping(vals[:, 0], vals[:, j]) for j in range(1, vals.shape[1])]
    rep = workflows.find_bottleneck(rates, float(a.delta), bool(a.strict), warpings)
    store.dump_json({"t_star": rep.t_star, "delta": rep.delta, "score": rep.score, "strict": bool(a.strict),
                     "n_sequences": len(names)}, out / "bottleneck.json")
    store.write_columns(out / "bottleneck_scores.csv", {"t": rep.grid, "score": rep.scores})
    if _plots(a):
        from . import plotting
        plotting.bottleneck(rep.grid, rep.scores, rep.t_star, rep.delta, out / "bottleneck.png")
        mean = np.mean([r.values for r in rates], axis=0)
        plotting.rates(rep.grid, [r.values for r in rates], mean, out / "rates.png", rep.t_star, rep.delta)


def cmd_fit(a):
    out = _out(a)
    names, seqs = _motions(a.input, a)
    grids = {tuple(s.grid) for s in seqs}
    if len(grids) != 1:
        raise DataError("fit needs sequences on one shared grid (use rate-normalized sequences)")
    data = np.stack([s.postures for s in seqs])
    P = data.shape[2]
    hyper = default_hyper(data, P)
    hyper = Hyper(float(a.lambda2), hyper.mu0, hyper.K0, hyper.nu0)
    if a.method == "mle":
        fits = [fit_mle(data[:, l]) for l in range(data.shape[1])]
        model = MotionDistribution(np.stack([f.mean for f in fits]), np.stack([f.cov for f in fits]), hyper)
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            model = fit_map(data, hyper, int(a.max_iter), float(a.tol))
        for w in caught:
            print(f"motionlab: warning: {w.message}", file=sys.stderr)
        store.write_columns(out / "objective.csv", {"sweep": np.arange(len(model.objective)),
                                                    "objective": np.asarray(model.objective, dtype=float)})
    (out / "model.json").write_text(model.dumps(), encoding="utf-8")
    store.write_columns(out / "model_summary.csv", {
        "t": seqs[0].grid,
        "trace_cov": np.trace(model.covs, axis1=1, axis2=2),
        "step_to_next": np.append(posture_distance(model.means[1:], model.means[:-1]), np.nan),
    })
    if _plots(a) and a.method == "map":
        from . import plotting
        plotting.objective(model.objective, out / "objective.png")


def _load_model(path):
    try:
        return MotionDistribution.loads(Path(path).read_text(encoding="utf-8"))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: not a motion model ({exc})") from None


def cmd_variation(a):
    out = _out(a)
    model = _load_model(a.model)
    L = len(model.means)
    if a.step is not None:
        l = int(a.step)
    elif a.time is not None:
        l = int(round(float(a.time) * (L - 1)))
    else:
        raise UsageError("give --step or --time")
    if not 0 <= l < L:
        raise DataError(f"step {l} outside 0..{L - 1}")
    var = workflows.motion_variation(model, l, np.asarray(a.s_values, dtype=float), int(a.n_eigs), a.scale)
    disp = posture_distance(var.postures, model.means[l])
    store.dump_json({"step": l, "s_values": _json_floats(var.s_values), "eigenvalues": _json_floats(var.eigenvalues),
                     "explained": _json_floats(var.explained), "eigenvectors": _json_floats(var.eigenvectors),
                     "mean": _json_floats(model.means[l]), "postures": _json_floats(var.postures)},
                    out / "variation.json")
    rows = [[j + 1, s, disp[j, i]] for j in range(len(disp)) for i, s in enumerate(var.s_values)]
    store.write_csv(out / "variation.csv", ["direction", "s", "distance_to_mean"], rows)
    if _plots(a):
        from . import plotting
        plotting.variation(var.s_values, disp, var.explained, out / "variation.png")


def cmd_restandardize(a):
    out = _out(a)
    ref = store.load_motion(a.reference, int(a.L), a.h)
    _, rates = _read_rates(a.rates)
    mean = workflows.mean_rate(rates)
    gbar, T = workflows.mean_pace_warping(mean, ref.grid)
    new = workflows.restandardize(ref, mean)
    store.save_postures(new, out / "reference.json")
    store.write_columns(out / "mean_pace.csv", {"t": ref.grid, "mean_rate": mean(ref.grid), "gamma_bar": gbar.values})
    store.dump_json({"T": T, "duration_before": ref.duration, "duration_after": new.duration,
                     "mean_rate_before": float(np.mean(mean.values))}, out / "restandardize.json")
    if _plots(a):
        from . import plotting
        plotting.pace(ref.grid, gbar.values, out / "mean_pace.png")


def cmd_gp(a):
    out = _out(a)
    _, rates = _read_rates(a.rates)
    times = np.concatenate([r.grid for r in rates])
    values = np.concatenate([r.values for r in rates])
    if a.amplitude2 is not None and a.lengthscale is not None:
        model = RateGP(times, values, float(a.amplitude2), float(a.lengthscale), float(a.noise_var))
    else:
        model = fit_rate_gp(times, values,
                            None if a.amplitude2 is None else [float(a.amplitude2)],
                            None if a.lengthscale is None else [float(a.lengthscale)], float(a.noise_var))
    grid = np.linspace(0.0, 1.0, int(a.grid_points))
    m, lo, hi = rate_band(model, grid, float(a.k))
    _, var = model.posterior(grid)
    store.write_columns(out / "rate_band.csv", {"t": grid, "mean": m, "var": var, "lower": lo, "upper": hi})
    store.dump_json({"amplitude2": model.amplitude2, "lengthscale": model.lengthscale,
                     "noise_var": model.noise_var, "jitter": model.jitter, "k": float(a.k),
                     "log_marginal_likelihood": model.log_marginal_likelihood()}, out / "gp.json")
    if _plots(a):
        from . import plotting
        plotting.rate_band(grid, m, lo, hi, times, values, out / "rate_band.png")


def _window(a, grid):
    if a.s is not None and a.t is not None:
        return window_indices(grid, float(a.s), float(a.t))
    t_star = _t_star(a)
    idx = np.flatnonzero(np.abs(grid - t_star) < float(a.delta))
    if len(idx) < 2:
        raise BadInterval(f"window |t - {t_star}| < {a.delta} holds fewer than 2 grid steps")
    return idx


def cmd_sir(a):
    out = _out(a)
    names, seqs = _motions(a.input, a)
    rate_names, rates = _read_rates(a.rates)
    _matching(names, rate_names, str(a.input))
    grid = seqs[0].grid
    window = _window(a, grid)
    s, t = float(grid[window[0]]), float(grid[window[-1]])
    model = _load_model(a.model) if a.model else None
    means = _window_means(seqs, window, model)
    C = np.stack([sequence_coords(seq.postures[window], means) for seq in seqs])
    r = np.array([cumulative_rate(rf, s, t) for rf in rates])
    res = sir_directions(C, r, None if a.B is None else int(a.B), a.h)
    Z = res.project(C)
    store.dump_json({"interval": [s, t], "window": window.tolist(), **res.to_dict()}, out / "sir.json")
    store.write_csv(out / "sir_features.csv", ["name", "rate"] + [f"z{b + 1}" for b in range(res.B)],
                    ([n, ri] + list(z) for n, ri, z in zip(names, r, Z)))


def cmd_bestpractice(a):
    out = _out(a)
    names, seqs = _motions(a.input, a)
    rate_names, rates = _read_rates(a.rates)
    _matching(names, rate_names, str(a.input))
    model = _load_model(a.model) if a.model else None
    means = None if model is None else model.means
    bp = workflows.best_practice(seqs, rates, _t_star(a), float(a.delta), None if a.B is None else int(a.B),
                                 means, tuple(float(p) for p in a.percentiles))
    grid = seqs[0].grid
    store.dump_json({
        "interval": list(bp.interval), "window": bp.window.tolist(), "times": grid[bp.window].tolist(),
        "degenerate": bp.degenerate, "coef": _json_floats(bp.coef), "percentiles": list(bp.percentiles),
        "target_rates": _json_floats(bp.target_rates), "target_features": _json_floats(bp.target_features),
        "sir": None if bp.sir is None else bp.sir.to_dict(),
    }, out / "bestpractice.json")
    store.dump_json({"times": grid[bp.window].tolist(), "means": _json_floats(bp.means),
                     **{f"p{p:g}": _json_floats(y) for p, y in zip(bp.percentiles, bp.reconstructed)}},
                    out / "bestpractice_postures.json")
    nz = bp.features.shape[1]
    store.write_csv(out / "bestpractice_features.csv", ["name", "rate"] + [f"z{b + 1}" for b in range(nz)],
                    ([n, ri] + list(z) for n, ri, z in zip(names, bp.window_rates, bp.features)))
    if _plots(a) and not bp.degenerate:
        from . import plotting
        plotting.best_practice(bp.features, bp.window_rates, bp.target_features, bp.target_rates,
                               out / "bestpractice.png")


def cmd_pipeline(a):
    """Synthesize the example cohort and run every analysis on it."""
    out = Path(a.out)
    P = ["--no-plots"] if a.no_plots else []
    P += ["--config", str(a.config)] if a.config else []
    R = P + ["--L", str(a.L)]
    D = [] if a.dp_grid is None else ["--dp-grid", str(a.dp_grid)]
    J = ["--jobs", str(a.jobs)]
    S = [] if a.seed is None else ["--seed", str(a.seed)]
    B = [] if a.B is None else ["--B", str(a.B)]

    def step(*argv):
        _dispatch(_parse(list(argv)))

    synth = out / "synth"
    step("synth", "--out", str(synth), *([] if a.spec is None else ["--spec", str(a.spec)]), *S, *P)
    manifest = store.load_json(synth / "manifest.json")
    label = a.label
    if label is None:
        classes = manifest["spec"]["classes"]
        slow = [c["label"] for c in classes if c.get("slow_segment")]
        label = slow[0] if slow else classes[0]["label"]
    if label not in manifest["references"]:
        raise DataError(f"no class labelled {label!r}")
    seqs, ref = str(synth / "sequences"), str(synth / manifest["references"][label])
    rates_csv, norm = str(out / "rates" / "rates.csv"), str(out / "rates" / "normalized")
    bneck, model = str(out / "bottleneck" / "bottleneck.json"), str(out / "fit" / "model.json")
    window = ["--rates", rates_csv, "--bottleneck", bneck, "--delta", str(a.bp_delta), "--model", model, *B]

    step("dist", "--input", seqs, "--out", str(out / "dist"), *R, *D, *J)
    step("classify", "--input", seqs, "--out", str(out / "classify"), *R, *D, *J, *S)
    step("rates", "--input", seqs, "--label", label, "--reference", ref, "--out", str(out / "rates"), *R, *D)
    step("bottleneck", "--rates", rates_csv, "--delta", str(a.delta), "--out", str(out / "bottleneck"), *P)
    step("fit", "--input", norm, "--method", "map", "--max-iter", str(a.max_iter), "--out", str(out / "fit"), *R)
    t_star = store.load_json(bneck)["t_star"]
    step("variation", "--model", model, "--time", repr(t_star), "--out", str(out / "variation"), *P)
    step("bestpractice", "--input", norm, *window, "--out", str(out / "bestpractice"), *R)
    step("sir", "--input", norm, *window, "--out", str(out / "sir"), *R)
    step("gp", "--rates", rates_csv, "--out", str(out / "gp"), *P)
    step("restandardize", "--reference", ref, "--rates", rates_csv, "--out", str(out / "restandardize"), *R)


COMMANDS = {
    "synth": cmd_synth, "convert": cmd_convert, "dist": cmd_dist, "align": cmd_align, "rates": cmd_rates,
    "fit": cmd_fit, "gp": cmd_gp, "sir": cmd_sir, "bottleneck": cmd_bottleneck, "bestpractice": cmd_bestpractice,
    "variation": cmd_variation, "restandardize": cmd_restandardize, "classify": cmd_classify,
    "pipeline": cmd_pipeline,
}


# -- parser ---------------------------------------------------------------------------------

def build_parser():
    p = Parser(prog="motionlab", description="Motion and time analysis of skeleton sequences.")
    p.add_argument("--version", action="version", version=f"motionlab {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=Parser)
    sub.required = True

    def cmd(name, help_, *, resample=True, plots=True):
        s = sub.add_parser(name, help=help_, description=help_)
        s.add_argument("--out", required=True, help="output directory (created if needed)")
        s.add_argument("--config", help="TOML file of option defaults")
        s.add_argument("--no-plots", action="store_true", default=False,
                       help="skip PNG figures" if plots else argparse.SUPPRESS)
        if resample:
            s.add_argument("--L", type=int, help="grid size for resampled skeletons (default 100)")
            s.add_argument("--h", type=float, help="kernel bandwidth for resampling (default: median spacing)")
        return s

    def dp(s):
        s.add_argument("--dp-grid", type=int, help="alignment lattice size (default: sequence grid)")

    def jobs(s):
        s.add_argument("--jobs", type=int, help="worker processes (default 1)")

    def seed(s):
        s.add_argument("--seed", type=int, help=f"random seed (default: ${SEED_ENV})")

    s = cmd("synth", "write a synthetic skeleton dataset from a dataset spec", resample=False, plots=False)
    s.add_argument("--spec", help="JSON or TOML dataset spec (default: shipped example)")
    seed(s)

    s = cmd("convert", "resample skeletons into posture sequences", plots=False)
    s.add_argument("--input", required=True, help="skeleton file or directory")

    s = cmd("dist", "pairwise elastic motion distances")
    s.add_argument("--input", required=True)
    dp(s)
    jobs(s)

    s = cmd("classify", "nearest-neighbour motion recognition")
    s.add_argument("--input", help="labelled sequences to split into train and test")
    s.add_argument("--train")
    s.add_argument("--test")
    s.add_argument("--train-fraction", type=float, help="per-class training share (default 0.8)")
    dp(s)
    jobs(s)
    seed(s)

    s = cmd("align", "align one sequence to a reference")
    s.add_argument("--moving", required=True)
    s.add_argument("--reference", required=True)
    dp(s)

    s = cmd("rates", "rate functions of a cohort against a reference")
    s.add_argument("--input", required=True)
    s.add_argument("--reference", required=True)
    s.add_argument("--label", help="only sequences with this label")
    dp(s)

    s = cmd("bottleneck", "locate the window where the cohort is slowest", resample=False)
    s.add_argument("--rates", required=True, help="rates.csv from the rates command")
    s.add_argument("--delta", type=float, help="half-width of the window (default 0.02)")
    s.add_argument("--strict", action="store_true", default=False, help="score min(0, gamma) on warps instead")
    s.add_argument("--warpings", help="warpings.csv (needed by --strict)")

    s = cmd("fit", "fit per-step wrapped normals (MLE) or the correlated-mean MAP model")
    s.add_argument("--input", required=True, help="posture sequences on one grid")
    s.add_argument("--method", choices=["mle", "map"])
    s.add_argument("--lambda2", type=float, help="mean-walk variance (default 1)")
    s.add_argument("--max-iter", type=int)
    s.add_argument("--tol", type=float)

    s = cmd("variation", "postures along the leading covariance directions", resample=False)
    s.add_argument("--model", required=True)
    s.add_argument("--step", type=int)
    s.add_argument("--time", type=float)
    s.add_argument("--s-values", type=float, nargs="+")
    s.add_argument("--n-eigs", type=int)
    s.add_argument("--scale", choices=["unit", "sd"])

    s = cmd("restandardize", "re-time the reference to the cohort's mean pace")
    s.add_argument("--reference", required=True)
    s.add_argument("--rates", required=True)

    s = cmd("gp", "Gaussian-process rate distribution and band", resample=False)
    s.add_argument("--rates", required=True)
    s.add_argument("--amplitude2", type=float)
    s.add_argument("--lengthscale", type=float)
    s.add_argument("--noise-var", type=float)
    s.add_argument("--k", type=float, help="band half-width in posterior standard deviations (default 1.5)")
    s.add_argument("--grid-points", type=int)

    for name, help_ in (("sir", "rate-linked projection directions in a window"),
                        ("bestpractice", "low, median and high rate reconstructions in a window")):
        s = cmd(name, help_, plots=name == "bestpractice")
        if name == "sir":
            s.add_argument("--s", type=float, help="window start")
            s.add_argument("--t", type=float, help="window end")
        s.add_argument("--input", required=True, help="rate-normalized posture sequences")
        s.add_argument("--rates", required=True)
        s.add_argument("--t-star", type=float)
        s.add_argument("--bottleneck", help="bottleneck.json supplying t-star")
        s.add_argument("--delta", type=float)
        s.add_argument("--B", type=int, help="number of directions (default: 90%% of the trace)")
        s.add_argument("--model", help="model.json supplying window means")
        if name == "bestpractice":
            s.add_argument("--percentiles", type=float, nargs="+")

    s = cmd("pipeline", "synthesize the example cohort and run every analysis")
    s.add_argument("--spec")
    s.add_argument("--label", help="class used for rate analyses (default: first with a slow segment)")
    s.add_argument("--delta", type=float)
    s.add_argument("--bp-delta", type=float, help="window half-width for best practice and SIR (default 0.1)")
    s.add_argument("--B", type=int)
    s.add_argument("--max-iter", type=int)
    dp(s)
    jobs(s)
    seed(s)
    return p


def _parse(argv):
    return resolve(build_parser().parse_args(argv))


def _dispatch(args):
    Path(args.out).mkdir(parents=True, exist_ok=True)
    COMMANDS[args.command](args)


def _one_line(exc):
    return " ".join(str(exc).split()) or type(exc).__name__


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        _dispatch(_parse(argv))
    except UsageError as exc:
        print(f"motionlab: usage error: {_one_line(exc)}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"motionlab: numerical failure: {_one_line(exc)}", file=sys.stderr)
        return 3
    except (DataError, MotionLabError, OSError) as exc:
        print(f"motionlab: data error: {_one_line(exc)}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"motionlab: numerical failure: {_one_line(exc)}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
