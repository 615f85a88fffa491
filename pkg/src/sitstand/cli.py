"""Single entry point: serve, simulate devices, generate cohorts, score, classify, calibrate.

Exit codes: 0 success, 2 validation failure, 3 accuracy-gate failure.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

from . import wire
from .base import SitStandError
from .classify import evaluate, features_from_packet, leave_one_out
from .cohort import CohortManifest, as_test_packet, generate_cohort
from .config import Config, load_config
from .pipeline import (
    TransitionDetector,
    emit_plot,
    resample_uniform,
    score_trial,
    total_load,
    write_csv,
)
from .sensors import CHANNELS

EXIT_VALIDATION = 2
EXIT_GATE = 3

_CONTEXT = {"help_option_names": ["-h", "--help"], "show_default": True}


@click.group(context_settings=_CONTEXT)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Key = value config file; flags override it, it overrides STS_ADDR/STS_STORE.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Sit-to-stand assessment chair: ingestion service, device simulator, analysis."""
    ctx.obj = {"config_path": config_path}


def _config(ctx: click.Context, **overrides) -> Config:
    try:
        return load_config(ctx.obj.get("config_path"), overrides)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc


@main.command()
@click.option("--addr", default=None, help="Listen address host:port. [default: 127.0.0.1:8000 or $STS_ADDR]")
@click.option("--store", default=None, help="Trial store path. [default: trials.wal or $STS_STORE]")
@click.pass_context
def serve(ctx: click.Context, addr: str | None, store: str | None) -> None:
    """Run the ingestion service until interrupted."""
    import uvicorn

    from .server import create_app

    cfg = _config(ctx, addr=addr, store=store)
    host, _, port = cfg.addr.partition(":")
    app = create_app(cfg.store)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000), log_level="warning")


@main.group()
def device() -> None:
    """Simulated chair device."""


@device.command("run")
@click.option("--users", default=1, type=int, help="Number of simulated users.")
@click.option("--trials", default=1, type=int, help="Trials per user.")
@click.option("--rate", default=None, type=click.Choice(["10", "80"]), help="Sampling rate in Hz. [default: 10]")
@click.option("--duration", default=None, type=float, help="Trial duration in seconds. [default: 30]")
@click.option("--mode", default="train", type=click.Choice(["train", "test"]), help="Submission mode.")
@click.option("--label", default=None, help="Label applied to every train trial (omit to leave unlabeled).")
@click.option("--server", default=None, help="Ingestion service URL. [default: http://$STS_ADDR]")
@click.option("--seed", default=None, type=int, help="Simulation seed. [default: 0]")
@click.pass_context
def device_run(ctx, users, trials, rate, duration, mode, label, server, seed) -> None:
    """Simulate trials and POST them to the ingestion service."""
    cfg = _config(ctx, rate_hz=int(rate) if rate else None, duration_s=duration, seed=seed)
    url = server or cfg.server_url
    if mode == "test" and label is not None:
        raise click.UsageError("test trials must not carry a label")
    packets, _ = generate_cohort(
        n_users=users,
        trials_per_user=trials,
        seed=cfg.seed,
        duration_s=cfg.duration_s,
        rate_hz=cfg.rate_hz,
        label_mode="strength",
    )
    posted = 0
    with httpx.Client(base_url=url, timeout=30.0) as client:
        for packet in packets:
            if mode == "test":
                packet = as_test_packet(packet)
            else:
                packet = _relabel(packet, label)
            resp = client.post(f"/api/v1/{mode}/trials", content=wire.serialize(packet),
                               headers={"content-type": "application/json"})
            if resp.status_code not in (200, 201):
                raise click.ClickException(f"server rejected {packet.trial_id}: {resp.status_code} {resp.text}")
            posted += 1
    click.echo(f"posted {posted} {mode} trials to {url}")


def _relabel(packet, label):
    from .acquisition import TrialPacket

    return TrialPacket(
        trial_id=packet.trial_id,
        user_id=packet.user_id,
        mode="train",
        label=label,
        started_at=packet.started_at,
        nominal_rate_hz=packet.nominal_rate_hz,
        channels=packet.channels,
        calibration=packet.calibration,
    )


@main.group()
def cohort() -> None:
    """Synthetic labeled cohorts."""


@cohort.command("generate")
@click.option("--users", default=4, type=int, help="Number of users.")
@click.option("--trials", default=3, type=int, help="Trials per user.")
@click.option("--seed", default=None, type=int, help="Cohort seed. [default: 0]")
@click.option("--rate", default=None, type=click.Choice(["10", "80"]), help="Sampling rate in Hz. [default: 10]")
@click.option("--duration", default=None, type=float, help="Trial duration in seconds. [default: 30]")
@click.option("--label-mode", default="user", type=click.Choice(["user", "strength"]),
              help="Ground-truth labels: per-user identity or strength class.")
@click.option("--reps", default=None, type=int, help="Sit-stand cycles per trial (omit to fill the duration).")
@click.option("--out", default=None, type=click.Path(file_okay=False), help="Write packet JSON files to this directory.")
@click.option("--post", is_flag=True, help="POST packets to the ingestion service.")
@click.option("--test-split", default=0, type=int, help="Per user, submit the last N trials to the test service unlabeled.")
@click.option("--server", default=None, help="Ingestion service URL. [default: http://$STS_ADDR]")
@click.option("--manifest-out", default="cohort_manifest.json", type=click.Path(dir_okay=False),
              help="Where to write the answer-key manifest.")
@click.pass_context
def cohort_generate(ctx, users, trials, seed, rate, duration, label_mode, reps, out, post,
                    test_split, server, manifest_out) -> None:
    """Generate a cohort; write packets to disk and/or POST them."""
    cfg = _config(ctx, rate_hz=int(rate) if rate else None, duration_s=duration, seed=seed)
    if test_split < 0 or test_split > trials:
        raise click.UsageError("--test-split must be between 0 and --trials")
    packets, manifest = generate_cohort(
        n_users=users,
        trials_per_user=trials,
        seed=cfg.seed,
        duration_s=cfg.duration_s,
        rate_hz=cfg.rate_hz,
        label_mode=label_mode,
        reps=reps,
    )
    Path(manifest_out).write_bytes(manifest.to_json())
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for packet in packets:
            (out_dir / f"{packet.trial_id}.json").write_bytes(wire.serialize(packet))
        click.echo(f"wrote {len(packets)} packets to {out_dir}")
    if post:
        url = server or cfg.server_url
        n_train = n_test = 0
        with httpx.Client(base_url=url, timeout=30.0) as client:
            for i, packet in enumerate(packets):
                trial_idx = i % trials
                is_test = trial_idx >= trials - test_split
                body = wire.serialize(as_test_packet(packet) if is_test else packet)
                endpoint = "test" if is_test else "train"
                resp = client.post(f"/api/v1/{endpoint}/trials", content=body,
                                   headers={"content-type": "application/json"})
                if resp.status_code not in (200, 201):
                    raise click.ClickException(
                        f"server rejected {packet.trial_id}: {resp.status_code} {resp.text}")
                if is_test:
                    n_test += 1
                else:
                    n_train += 1
        click.echo(f"posted {n_train} train / {n_test} test trials to {url}")
    click.echo(f"manifest: {manifest_out} ({len(manifest.entries)} trials, labels by {label_mode})")


@main.command()
@click.argument("trial")
@click.option("--server", default=None, help="Ingestion service URL, used when TRIAL is an id. [default: http://$STS_ADDR]")
@click.option("--plot", "plot_path", default=None, type=click.Path(dir_okay=False), help="Write an SVG plot here.")
@click.option("--csv", "csv_path", default=None, type=click.Path(dir_okay=False), help="Write the aligned CSV here.")
@click.option("--grid-rate", default=None, type=float, help="Resampling grid rate in Hz. [default: packet rate]")
@click.option("--seated-fraction", default=None, type=float, help="Seated threshold as a body-weight fraction. [default: 0.6]")
@click.option("--standing-fraction", default=None, type=float, help="Standing threshold as a body-weight fraction. [default: 0.15]")
@click.option("--dwell-ms", default=None, type=float, help="Dwell time for state confirmation. [default: 300]")
@click.pass_context
def score(ctx, trial, server, plot_path, csv_path, grid_rate, seated_fraction, standing_fraction, dwell_ms) -> None:
    """Score one trial (a stored trial id or a packet file) with 30CST / 5xSTS."""
    cfg = _config(ctx, seated_fraction=seated_fraction, standing_fraction=standing_fraction, dwell_ms=dwell_ms)
    path = Path(trial)
    try:
        if path.exists():
            packet = wire.parse(path.read_bytes())
        else:
            packet = _fetch_packet(server or cfg.server_url, trial)
    except SitStandError as exc:
        click.echo(f"invalid trial: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    aligned = resample_uniform(packet, grid_rate)
    detector = TransitionDetector(
        seated_fraction=cfg.seated_fraction,
        standing_fraction=cfg.standing_fraction,
        dwell_ms=cfg.dwell_ms,
    )
    events = detector.detect(total_load(aligned), aligned.t_ms)
    result = score_trial(events, aligned.duration_ms())
    click.echo(f"trial: {packet.trial_id} (user {packet.user_id}, {packet.nominal_rate_hz} Hz)")
    click.echo(f"reps_30s: {result.reps_30s}")
    five = f"{result.five_reps_time_s:.3f} s" if result.five_reps_time_s is not None else "n/a (fewer than 5 reps)"
    click.echo(f"five_reps_time: {five}")
    for event in result.events:
        click.echo(f"  {event.kind}: {event.t_start_ms:.0f} -> {event.t_end_ms:.0f} ms ({event.duration_ms:.0f} ms)")
    if plot_path:
        emit_plot(aligned, plot_path)
        click.echo(f"plot: {plot_path}")
    if csv_path:
        write_csv(aligned, csv_path)
        click.echo(f"csv: {csv_path}")


def _fetch_packet(url: str, trial_id: str):
    with httpx.Client(base_url=url, timeout=30.0) as client:
        for endpoint in ("train", "test"):
            resp = client.get(f"/api/v1/{endpoint}/trials/{trial_id}")
            if resp.status_code == 200:
                return wire.packet_from_payload(resp.json()["payload"])
    raise SitStandError(f"trial {trial_id} not found on {url}")


def pull_packets(url: str, mode: str, status: str | None = None, page_size: int = 100):
    """Page through a pull endpoint; yields (packet, stored_label)."""
    with httpx.Client(base_url=url, timeout=60.0) as client:
        offset = 0
        while True:
            params = {"limit": page_size, "offset": offset}
            if status:
                params["status"] = status
            resp = client.get(f"/api/v1/{mode}/trials", params=params)
            resp.raise_for_status()
            rows = resp.json()
            for row in rows:
                yield wire.packet_from_payload(row["payload"]), row["payload"]["label"]
            if len(rows) < page_size:
                return
            offset += page_size


@main.command()
@click.option("--server", default=None, help="Ingestion service URL. [default: http://$STS_ADDR]")
@click.option("--manifest", "manifest_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Answer-key manifest with test-trial truth (required unless --loo).")
@click.option("--loo", is_flag=True, help="Leave-one-out over the train store instead of train/test evaluation.")
@click.option("--k", default=None, type=int, help="Neighbors. [default: 1]")
@click.option("--band", default=None, type=float, help="Sakoe-Chiba band fraction. [default: 0.1]")
@click.option("--channel-mode", default=None, type=click.Choice(["dependent", "independent"]),
              help="Joint multichannel DTW or summed per-channel DTW. [default: dependent]")
@click.option("--min-accuracy", default=None, type=float, help="Exit 3 if accuracy falls below this gate.")
@click.option("--report", "report_format", default="text", type=click.Choice(["text", "json"]), help="Report format.")
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False), help="Also write the JSON report here.")
@click.pass_context
def classify(ctx, server, manifest_path, loo, k, band, channel_mode, min_accuracy, report_format, out_path) -> None:
    """Pull trials from the service, run the DTW nearest-neighbor evaluation, print the report."""
    cfg = _config(ctx, n_neighbors=k, band_fraction=band, channel_mode=channel_mode)
    url = server or cfg.server_url
    try:
        train_items = [
            (p.trial_id, label, features_from_packet(p))
            for p, label in pull_packets(url, "train")
            if label is not None
        ]
        if loo:
            report = leave_one_out(train_items, cfg.n_neighbors, cfg.band_fraction, cfg.channel_mode)
        else:
            if manifest_path is None:
                raise click.UsageError("--manifest is required without --loo")
            manifest = CohortManifest.from_json(Path(manifest_path).read_bytes())
            test_items = [(p.trial_id, features_from_packet(p)) for p, _ in pull_packets(url, "test")]
            report = evaluate(train_items, test_items, manifest.truth(),
                              cfg.n_neighbors, cfg.band_fraction, cfg.channel_mode)
    except SitStandError as exc:
        click.echo(f"classification failed: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except httpx.HTTPError as exc:
        click.echo(f"pull failed: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    if report_format == "json":
        click.echo(report.to_json().decode())
    else:
        click.echo(report.to_text(), nl=False)
    if out_path:
        Path(out_path).write_bytes(report.to_json())
    if min_accuracy is not None and report.accuracy < min_accuracy:
        click.echo(f"accuracy {report.accuracy:.4f} below gate {min_accuracy}", err=True)
        sys.exit(EXIT_GATE)


@main.command()
@click.option("--server", default=None, help="Ingestion service URL. [default: http://$STS_ADDR]")
@click.option("--mass", default=10.0, type=float, help="Known calibration mass in kg.")
@click.option("--n", default=20, type=int, help="Readings to average per step.")
@click.option("--rate", default=None, type=click.Choice(["10", "80"]), help="Device rate for the session. [default: 10]")
@click.option("--seed", default=None, type=int, help="Device session seed. [default: 0]")
@click.option("--yes", is_flag=True, help="Skip the confirmation prompts (simulated chair only).")
@click.pass_context
def calibrate(ctx, server, mass, n, rate, seed, yes) -> None:
    """Interactive tare / known-mass calibration against the live simulated device."""
    cfg = _config(ctx, rate_hz=int(rate) if rate else None, seed=seed)
    url = server or cfg.server_url
    with httpx.Client(base_url=url, timeout=30.0) as client:
        opened = False
        if client.get("/api/v1/device/session").status_code == 404:
            resp = client.post("/api/v1/device/session", json={"rate_hz": cfg.rate_hz, "seed": cfg.seed})
            if resp.status_code != 201:
                raise click.ClickException(f"could not open device session: {resp.text}")
            opened = True
        if not yes:
            click.confirm("Unload the chair completely, then continue", abort=True)
        results = {}
        for ch in CHANNELS:
            resp = client.post("/api/v1/device/calibrate/tare", json={"channel": ch.value, "n": n})
            if resp.status_code != 200:
                raise click.ClickException(f"tare failed for {ch.value}: {resp.text}")
            results[ch.value] = {"tare_counts": resp.json()["tare_counts"]}
        for ch in CHANNELS:
            if not yes:
                click.confirm(f"Place the {mass:g} kg mass on {ch.value}, then continue", abort=True)
            resp = client.post("/api/v1/device/calibrate/scale",
                               json={"channel": ch.value, "known_mass_kg": mass, "n": n})
            if resp.status_code != 200:
                raise click.ClickException(f"scale failed for {ch.value}: {resp.text}")
            results[ch.value]["scale_counts_per_kg"] = resp.json()["scale_counts_per_kg"]
        click.echo(json.dumps(results, indent=2, sort_keys=True))
        if opened:
            click.echo("calibration stored in the device session")


if __name__ == "__main__":
    main()
