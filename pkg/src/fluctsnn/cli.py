"""Command-line experiment driver.

Subcommands: gen-randman, convert-shd, init-report, simulate, train,
diagnose.  All behavior is controlled by a sectioned key=value config file
(see config.py) plus --set section.key=value overrides; every run writes a
manifest and an echo of the effective config into the output directory, and
re-running from the echo reproduces the run.
"""

from __future__ import annotations

import argparse
import struct
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config, parse_layers, write_config
from .datasets import (
    SpikeBatch,
    bin_events,
    generate_poisson,
    generate_randman,
    load_shd,
    load_spikepack,
    save_spikepack,
    split_batch,
)
from .diagnostics import (
    distribution_compare,
    measure_membrane_stats,
    sampling_theory,
    spiketrain_stats,
    write_cv_csv,
    write_histogram_csv,
    write_membrane_csv,
    write_spiketrain_csv,
)
from .dynamics import (
    DaleConfig,
    LayerConfig,
    Network,
    NeuronParams,
    export_traces_csv,
    simulate,
)
from .init import (
    DalianStats,
    FluctuationTarget,
    InputStats,
    init_dalian_ff_exp,
    init_dalian_lognormal,
    init_dalian_rec_exp,
    init_feedforward,
    init_kaiming,
    init_recurrent,
    predict_fluctuations,
    sample_weights,
)
from .kernel import KernelParams, kernel_integrals_numeric
from .surrogate import SurrogateConfig
from .training import LossConfig, TrainConfig, train, write_training_log

WEIGHTS_MAGIC = b"WGTS"
WEIGHTS_VERSION = 1


# -- weights file ---------------------------------------------------------------


def save_weights(path, blocks: dict[str, np.ndarray]) -> None:
    """Binary weights file: per named block a little-endian f32 matrix."""
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<II", WEIGHTS_VERSION, len(blocks)))
        for name, w in blocks.items():
            w = np.asarray(w, dtype="<f4")
            if w.ndim != 2:
                raise ValueError(f"block {name}: expected a matrix")
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", w.shape[0], w.shape[1]))
            fh.write(w.tobytes())


def load_weights(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != WEIGHTS_MAGIC:
        raise ValueError("bad magic")
    version, n_blocks = struct.unpack_from("<II", blob, 4)
    if version != WEIGHTS_VERSION:
        raise ValueError(f"unsupported version {version}")
    off = 12
    blocks = {}
    for _ in range(n_blocks):
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + name_len].decode()
        off += name_len
        rows, cols = struct.unpack_from("<II", blob, off)
        off += 8
        w = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=off)
        off += rows * cols * 4
        blocks[name] = w.reshape(rows, cols).astype(np.float64)
    return blocks


# -- dataset and network construction --------------------------------------------


def load_dataset(cfg) -> SpikeBatch:
    d = cfg["dataset"]
    kind = d["kind"]
    if kind == "randman":
        return generate_randman(
            classes=d["classes"],
            samples_per_class=d["samples_per_class"],
            m=d["n_units"],
            d=d["manifold_dim"],
            alpha_smooth=d["alpha_smooth"],
            t_active=d["t_active"],
            t_pad=d["t_pad"],
            seed=d["seed"],
        )
    if kind == "poisson":
        return generate_poisson(
            n_units=d["n_units"],
            nu=d["nu"],
            duration=d["duration"],
            dt=cfg["network"]["dt"],
            seed=d["seed"],
            n_samples=d["n_samples"],
        )
    if kind == "shd":
        if not d["path"]:
            raise ConfigError("dataset.path required for kind=shd")
        return load_shd(d["path"])
    if kind == "spikepack":
        if not d["path"]:
            raise ConfigError("dataset.path required for kind=spikepack")
        return load_spikepack(d["path"])
    raise ConfigError(f"unknown dataset.kind {kind!r}")


def dataset_duration_ms(cfg) -> float:
    d = cfg["dataset"]
    if d["kind"] == "randman":
        return d["t_active"] + d["t_pad"]
    if d["kind"] == "poisson":
        return d["duration"]
    if d["kind"] == "shd":
        return 700.0
    return load_spikepack(d["path"]).duration


def dataset_units(cfg) -> int:
    d = cfg["dataset"]
    if d["kind"] in ("randman", "poisson"):
        return d["n_units"]
    if d["kind"] == "shd":
        return 700
    return load_spikepack(d["path"]).n_units


def dataset_classes(cfg) -> int:
    d = cfg["dataset"]
    if d["kind"] == "randman":
        return d["classes"]
    if d["kind"] == "poisson":
        return 1
    if d["kind"] == "shd":
        return 20
    return load_spikepack(d["path"]).n_classes


def build_network(cfg) -> Network:
    n = cfg["network"]
    ms = 1e-3
    neuron = NeuronParams(tau_mem=n["tau_mem"] * ms, tau_syn=n["tau_syn"] * ms)
    neuron_inh = NeuronParams(tau_mem=n["tau_mem_inh"] * ms, tau_syn=n["tau_syn_inh"] * ms)
    tau_out = n["tau_out"] if n["tau_out"] is not None else dataset_duration_ms(cfg)
    readout = NeuronParams(tau_mem=tau_out * ms, tau_syn=n["tau_syn"] * ms)

    layers = []
    for entry in parse_layers(n["layers"]):
        if "n_inh" in entry:
            dale = DaleConfig(
                n_exc=entry["n_exc"],
                n_inh=entry["n_inh"],
                neuron_exc=neuron,
                neuron_inh=neuron_inh,
                exc_recurrence=entry["recurrent"],
            )
            layers.append(
                LayerConfig(
                    n=entry["n_exc"] + entry["n_inh"],
                    neuron=neuron,
                    dale=dale,
                    skip_to_readout=entry["skip"],
                )
            )
        else:
            layers.append(
                LayerConfig(
                    n=entry["n"],
                    neuron=neuron,
                    recurrent=entry["recurrent"],
                    skip_to_readout=entry["skip"],
                )
            )
    return Network(
        n_in=dataset_units(cfg),
        layers=layers,
        n_out=dataset_classes(cfg),
        readout_neuron=readout,
        dt=n["dt"] * ms,
        surrogate=SurrogateConfig(
            beta=n["surrogate_beta"], rescaled=n["surrogate_rescaled"]
        ),
    )


def _numeric_eps(neuron: NeuronParams, dt: float):
    return kernel_integrals_numeric(
        KernelParams(tau_mem=neuron.tau_mem, tau_syn=neuron.tau_syn), dt
    )


def _spec_items(name: str, spec):
    if spec.family == "normal":
        return [(f"{name}.family", "normal"),
                (f"{name}.mu_w", spec.params[0]),
                (f"{name}.sigma_w", spec.params[1])]
    if spec.family == "exponential":
        return [(f"{name}.family", "exponential"),
                (f"{name}.lambda", spec.params[0])]
    if spec.family == "lognormal":
        return [(f"{name}.family", "lognormal"),
                (f"{name}.mu", spec.params[0]),
                (f"{name}.sigma", spec.params[1])]
    return [(f"{name}.family", spec.family), (f"{name}.params", spec.params)]


def initialize_network(net: Network, cfg, nu_in: float) -> list[tuple[str, object]]:
    """Sample and install weights per the init section; returns the report.

    The report is a flat key=value list: every computed weight-distribution
    parameter, the predicted (mu_u, sigma_u) per layer, and the predicted
    mean-driven fraction of the first hidden layer.
    """
    ic = cfg["init"]
    strategy = ic["strategy"]
    family = ic["family"]
    seed = ic["seed"]
    nu_hidden = ic["nu_hidden"] if ic["nu_hidden"] is not None else nu_in
    report: list[tuple[str, object]] = [
        ("strategy", strategy), ("nu_in", nu_in), ("nu_hidden", nu_hidden),
    ]

    def fresh_target():
        if ic["xi"] is not None:
            return FluctuationTarget(mu_u=ic["mu_u"], xi=ic["xi"], alpha=ic["alpha"])
        return FluctuationTarget(mu_u=ic["mu_u"], sigma_u=ic["sigma_u"], alpha=ic["alpha"])

    counter = 0

    def install(name, spec):
        nonlocal counter
        shape = tuple(net.weights[name].shape)
        net.set_weights(name, sample_weights(spec, [seed, counter], shape))
        counter += 1
        report.extend(_spec_items(name, spec))

    if strategy == "zero":
        return report
    if strategy not in ("fluctuation", "kaiming"):
        raise ConfigError(f"unknown init.strategy {strategy!r}")

    fan_in = net.n_in
    for li, layer in enumerate(net.layers):
        nu = nu_in if li == 0 else nu_hidden
        if strategy == "kaiming":
            if layer.dale is not None:
                raise ConfigError("kaiming init is not defined for Dale layers")
            install(f"h{li}.ff", init_kaiming(fan_in))
            if layer.recurrent:
                install(f"h{li}.rec", init_kaiming(layer.n))
            fan_in = layer.n_out
            continue

        target = fresh_target()
        if layer.dale is None:
            if family != "normal":
                raise ConfigError(
                    f"init.family={family} requires Dale layers; dense layers use normal"
                )
            eps = _numeric_eps(layer.neuron, net.dt)
            if layer.recurrent:
                stats = InputStats(n_in=fan_in, nu=nu, n_rec=layer.n, nu_rec=nu_hidden)
                ff, rec = init_recurrent(target, stats, eps)
                install(f"h{li}.ff", ff)
                install(f"h{li}.rec", rec)
                mu_u, sigma_u = predict_fluctuations((ff, rec), stats, eps)
            else:
                stats = InputStats(n_in=fan_in, nu=nu)
                ff = init_feedforward(target, stats, eps)
                install(f"h{li}.ff", ff)
                mu_u, sigma_u = predict_fluctuations(ff, stats, eps)
        else:
            d = layer.dale
            eps_e = _numeric_eps(d.neuron_exc, net.dt)
            eps_i = _numeric_eps(d.neuron_inh, net.dt)
            if d.exc_recurrence:
                stats = DalianStats(
                    n_E=fan_in, n_I=d.n_inh, nu_E=nu, nu_I=nu,
                    eps_E=eps_e, eps_I=eps_i, n_F=fan_in, n_R=d.n_exc,
                )
                if family == "exponential":
                    ff, rec, inh = init_dalian_rec_exp(target, stats)
                elif family == "lognormal":
                    ff, rec, inh = init_dalian_lognormal(target, stats, recurrent=True)
                else:
                    raise ConfigError("Dale layers need exponential or lognormal family")
                # the inhibitory population sees the same presynaptic mix as
                # the excitatory one, so its blocks reuse the same draws
                install(f"h{li}.fe", ff)
                install(f"h{li}.fi", ff)
                install(f"h{li}.re", rec)
                install(f"h{li}.ri", rec)
                install(f"h{li}.ie", inh)
                install(f"h{li}.ii", inh)
                mu_u, sigma_u = predict_fluctuations((ff, rec, inh), stats)
            else:
                stats = DalianStats(
                    n_E=fan_in, n_I=d.n_inh, nu_E=nu, nu_I=nu,
                    eps_E=eps_e, eps_I=eps_i,
                )
                if family == "exponential":
                    exc, inh = init_dalian_ff_exp(target, stats)
                elif family == "lognormal":
                    exc, inh = init_dalian_lognormal(target, stats)
                else:
                    raise ConfigError("Dale layers need exponential or lognormal family")
                install(f"h{li}.fe", exc)
                install(f"h{li}.fi", exc)
                install(f"h{li}.ie", inh)
                install(f"h{li}.ii", inh)
                mu_u, sigma_u = predict_fluctuations((exc, inh), stats)
        report.append((f"h{li}.predicted_mu_u", mu_u))
        report.append((f"h{li}.predicted_sigma_u", sigma_u))
        if li == 0:
            theory = sampling_theory(fan_in, nu, _numeric_eps(layer.neuron, net.dt)
                                     if layer.dale is None else eps_e, target.sigma)
            report.append(("mean_driven_fraction", theory.mean_driven_fraction))
        fan_in = layer.n_out

    # readout and skip blocks share the hidden-rate assumption
    eps_out = _numeric_eps(net.readout_neuron, net.dt)
    if strategy == "kaiming":
        install("out.ff", init_kaiming(fan_in))
    else:
        target = fresh_target()
        install("out.ff", init_feedforward(target, InputStats(fan_in, nu_hidden), eps_out))
    for li, layer in enumerate(net.layers[:-1]):
        if layer.skip_to_readout:
            if strategy == "kaiming":
                install(f"out.skip{li}", init_kaiming(layer.n_out))
            else:
                install(
                    f"out.skip{li}",
                    init_feedforward(
                        fresh_target(), InputStats(layer.n_out, nu_hidden), eps_out
                    ),
                )
    return report


def format_report(report) -> str:
    lines = []
    for key, value in report:
        if isinstance(value, float):
            lines.append(f"{key} = {value:.10g}")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


# -- run scaffolding -------------------------------------------------------------


def _prepare_run(cfg, subcommand: str) -> Path:
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_config(out / "config.txt", cfg)
    return out


def _write_manifest(out: Path, cfg, subcommand: str, t0: float) -> None:
    import torch

    lines = [
        f"subcommand = {subcommand}",
        f"dataset_seed = {cfg['dataset']['seed']}",
        f"init_seed = {cfg['init']['seed']}",
        f"training_seed = {cfg['training']['seed']}",
        f"python = {sys.version.split()[0]}",
        f"numpy = {np.__version__}",
        f"torch = {torch.__version__}",
        f"config_echo = config.txt",
        f"wall_time_s = {time.time() - t0:.3f}",
    ]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def _measured_nu(cfg) -> float:
    if cfg["init"]["nu"] is not None:
        return cfg["init"]["nu"]
    return load_dataset(cfg).mean_rate()


def _apply_weights_file(net: Network, path) -> None:
    blocks = load_weights(path)
    for name, w in blocks.items():
        if name not in net.weights:
            raise ValueError(f"weights file block {name!r} not in network")
        net.set_weights(name, w)


# -- subcommands ------------------------------------------------------------------


def cmd_gen_randman(cfg, args) -> int:
    t0 = time.time()
    out = _prepare_run(cfg, "gen-randman")
    batch = load_dataset({**cfg, "dataset": {**cfg["dataset"], "kind": "randman"}})
    path = out / "randman.spkp"
    save_spikepack(path, batch)
    _write_manifest(out, cfg, "gen-randman", t0)
    print(f"wrote {path} ({len(batch)} samples, {batch.n_units} units)")
    return 0


def cmd_convert_shd(cfg, args) -> int:
    t0 = time.time()
    out = _prepare_run(cfg, "convert-shd")
    if not cfg["dataset"]["path"]:
        raise ConfigError("dataset.path required (SHD HDF5 file)")
    batch = load_shd(cfg["dataset"]["path"])
    path = out / "shd.spkp"
    save_spikepack(path, batch)
    _write_manifest(out, cfg, "convert-shd", t0)
    print(f"wrote {path} ({len(batch)} samples, mean rate {batch.mean_rate():.2f} Hz)")
    return 0


def cmd_init_report(cfg, args) -> int:
    t0 = time.time()
    out = _prepare_run(cfg, "init-report")
    nu = _measured_nu(cfg)
    net = build_network(cfg)
    report = initialize_network(net, cfg, nu)
    text = format_report(report)
    (out / "init_report.txt").write_text(text)
    _write_manifest(out, cfg, "init-report", t0)
    print(text, end="")
    return 0


def cmd_simulate(cfg, args) -> int:
    t0 = time.time()
    out = _prepare_run(cfg, "simulate")
    batch = load_dataset(cfg)
    if len(batch) > cfg["simulate"]["max_samples"]:
        batch = batch.subset(np.arange(cfg["simulate"]["max_samples"]))
    dense = bin_events(batch, cfg["network"]["dt"])
    net = build_network(cfg)
    nu = cfg["init"]["nu"] if cfg["init"]["nu"] is not None else batch.mean_rate()
    initialize_network(net, cfg, nu)
    if args.weights:
        _apply_weights_file(net, args.weights)
    result = simulate(
        net,
        dense,
        record_membrane=cfg["simulate"]["record_membrane"],
        no_reset=cfg["simulate"]["no_reset"],
    )
    export_traces_csv(out / "readout.csv", [result.readout])
    export_traces_csv(out / "spikes.csv", result.spikes)
    if result.membranes is not None:
        export_traces_csv(out / "membranes.csv", result.membranes)
    stats = spiketrain_stats(result.spikes[0], cfg["network"]["dt"])
    write_spiketrain_csv(out / "rates.csv", stats)
    if cfg["output"]["plots"]:
        from .plotting import plot_rates

        plot_rates(out / "rates.png", stats)
    _write_manifest(out, cfg, "simulate", t0)
    print(f"simulated {len(batch)} samples; layer rates (Hz): "
          + ", ".join(f"{r:.2f}" for r in result.layer_rates()))
    return 0


def cmd_train(cfg, args) -> int:
    t0 = time.time()
    out = _prepare_run(cfg, "train")
    batch = load_dataset(cfg)
    train_batch, valid_batch = split_batch(
        batch, cfg["dataset"]["valid_frac"], cfg["dataset"]["seed"]
    )
    net = build_network(cfg)
    nu = cfg["init"]["nu"] if cfg["init"]["nu"] is not None else batch.mean_rate()
    report = initialize_network(net, cfg, nu)
    (out / "init_report.txt").write_text(format_report(report))
    if args.weights:
        _apply_weights_file(net, args.weights)

    tc = cfg["training"]
    v_upper = tc["v_upper"] if tc["v_upper"] is not None else batch.duration / 100.0
    train_cfg = TrainConfig(
        epochs=tc["epochs"],
        batch_size=tc["batch_size"],
        optimizer=tc["optimizer"],
        lr=tc["lr"],
        loss=LossConfig(
            lambda_upper=tc["lambda_upper"],
            v_upper=v_upper,
            lambda_lower=tc["lambda_lower"],
            v_lower=tc["v_lower"],
        ),
        priming_epochs=tc["priming_epochs"],
        ongoing_homeostasis=tc["ongoing_homeostasis"],
        seed=tc["seed"],
        probe_gradients=tc["probe_gradients"],
    )
    logs = train(net, train_batch, valid_batch, train_cfg)
    write_training_log(out / "training_log.csv", logs)
    save_weights(
        out / "weights.wgts",
        {name: w.detach().numpy() for name, w in net.weights.items()},
    )
    if cfg["output"]["plots"]:
        from .plotting import plot_training_curves

        plot_training_curves(out / "training_curves.png", logs)
    _write_manifest(out, cfg, "train", t0)
    final = logs[-1]
    print(f"trained {len(logs)} epochs; final valid accuracy {final.valid_accuracy:.4f}")
    return 0


def cmd_diagnose(cfg, args) -> int:
    t0 = time.time()
    out = _prepare_run(cfg, "diagnose")
    batch = load_dataset(cfg)
    if len(batch) > cfg["simulate"]["max_samples"]:
        batch = batch.subset(np.arange(cfg["simulate"]["max_samples"]))
    dense = bin_events(batch, cfg["network"]["dt"])
    net = build_network(cfg)
    nu = cfg["init"]["nu"] if cfg["init"]["nu"] is not None else max(batch.mean_rate(), 1e-9)
    initialize_network(net, cfg, nu)
    if args.weights:
        _apply_weights_file(net, args.weights)

    stats = measure_membrane_stats(net, dense.data)
    write_membrane_csv(out / "membrane.csv", stats)
    write_histogram_csv(out / "membrane_hist.csv", stats)

    sigma_target = cfg["init"]["sigma_u"]
    theory = None
    lines = []
    if nu > 0 and sigma_target:
        first = net.layers[0]
        neuron = first.dale.neuron_exc if first.dale is not None else first.neuron
        theory = sampling_theory(net.n_in, nu, _numeric_eps(neuron, net.dt), sigma_target)
        ks = distribution_compare(stats.sigma_hat, theory.sigma_cdf) \
            if len(stats.sigma_hat) >= 100 else None
        lines = [
            f"mu_var = {theory.mu_var:.10g}",
            f"gamma_shape = {theory.gamma_shape:.10g}",
            f"gamma_scale = {theory.gamma_scale:.10g}",
            f"nakagami_shape = {theory.nakagami_shape:.10g}",
            f"nakagami_spread = {theory.nakagami_spread:.10g}",
            f"predicted_mean_driven_fraction = {theory.mean_driven_fraction:.10g}",
            f"measured_mean_driven_fraction = {stats.mean_driven_fraction():.10g}",
        ]
        if ks is not None:
            lines += [
                f"sigma_ks_statistic = {ks.statistic:.10g}",
                f"sigma_ks_critical = {ks.critical:.10g}",
                f"sigma_ks_passed = {str(ks.passed).lower()}",
            ]
    (out / "sampling_theory.txt").write_text("\n".join(lines) + "\n" if lines else "")

    result = simulate(net, dense)
    train_stats = spiketrain_stats(result.spikes[0], cfg["network"]["dt"])
    write_spiketrain_csv(out / "rates.csv", train_stats)
    write_cv_csv(out / "isi_cv.csv", train_stats)

    if cfg["output"]["plots"]:
        from .plotting import plot_membrane_histogram, plot_rates, plot_sigma_scatter

        plot_membrane_histogram(out / "membrane_hist.png", stats, theory)
        plot_sigma_scatter(out / "sigma_scatter.png", stats.mu_hat, stats.sigma_hat,
                           sigma_target)
        plot_rates(out / "rates.png", train_stats)
    _write_manifest(out, cfg, "diagnose", t0)
    print(f"diagnosed layer 0: mean mu_hat {stats.mu_hat.mean():.4f}, "
          f"mean sigma_hat {stats.sigma_hat.mean():.4f}")
    return 0


_COMMANDS = {
    "gen-randman": cmd_gen_randman,
    "convert-shd": cmd_convert_shd,
    "init-report": cmd_init_report,
    "simulate": cmd_simulate,
    "train": cmd_train,
    "diagnose": cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluctsnn",
        description="Spiking-network construction, fluctuation-targeted "
        "initialization, simulation, and training.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", default=None, help="config file path")
        p.add_argument(
            "-s", "--set", action="append", default=[], dest="overrides",
            metavar="SECTION.KEY=VALUE", help="override a config value",
        )
        p.add_argument("-o", "--out", default=None, help="output directory")
        if name in ("simulate", "train", "diagnose"):
            p.add_argument("--weights", default=None, help="load weights from a file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.overrides)
        if args.out is not None:
            overrides.append(f"output.dir={args.out}")
        cfg = load_config(args.config, overrides)
        return _COMMANDS[args.subcommand](cfg, args)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        msg = str(exc).replace("\n", "; ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
