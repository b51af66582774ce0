"""Batch command-line front end.

Commands: synth, localize, plan, pretrain-toy, eval-occlusion, gradcheck,
sweep. Every artifact embeds the master seed and a hash of the effective
configuration; reruns with identical config reproduce outputs
byte-for-byte. Files are written under a ``.partial`` suffix and renamed
only once complete.

The master seed comes from ``--seed``, overridden by the ``MWM_SEED``
environment variable when set. ``--config`` supplies flag defaults from a
JSON or TOML file keyed by command name.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
from contextlib import contextmanager

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    try:
        import tomli as tomllib  # type: ignore[no-redef]
    except ModuleNotFoundError:
        tomllib = None

import click
import numpy as np

from . import grids, plots, synth
from .errors import ConfigInvalid, MwmError
from .localization import (
    CommandProvider,
    IdentityProvider,
    LocalizeConfig,
    RelativeArea,
    TopK,
    box_record,
    localize,
    read_boxes_jsonl,
)
from .metrics import occlusion_metrics, write_report_csv
from .mim import ToyHyper, init_model, save_model, train_step
from .planner import (
    PatchGrid,
    classify_patches,
    derive_seed,
    overall_ratio,
    plan_to_json,
    random_plan,
    sample_plan,
    solve_bg_ratio,
)
from .prompts import PromptTemplate, render_prompt


def config_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@contextmanager
def atomic_write(path: str):
    """Yield a temp path; rename to the final path only on success."""
    tmp = f"{path}.partial"
    try:
        yield tmp
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _effective_seed(seed: int) -> int:
    env = os.environ.get("MWM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigInvalid(f"MWM_SEED is not an integer: {env!r}") from exc
    return seed


def _load_config_file(path: str) -> dict:
    try:
        if path.endswith(".toml"):
            if tomllib is None:
                raise ConfigInvalid("TOML config needs Python >= 3.11 or the tomli package")
        with open(path, "rb" if path.endswith(".toml") else "r") as f:
            return tomllib.load(f) if path.endswith(".toml") else json.load(f)
    except (OSError, ValueError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc


def _policy_from_str(spec: str):
    """Parse "relative:0.5" or "topk:2"."""
    kind, _, arg = spec.partition(":")
    if kind == "relative":
        return RelativeArea(float(arg or 0.5))
    if kind == "topk":
        return TopK(int(arg or 1))
    raise ConfigInvalid(f"unknown selection policy {spec!r}")


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except ConfigInvalid as exc:
            click.echo(json.dumps({"error": "ConfigInvalid", "message": str(exc)}), err=True)
            sys.exit(2)
        except (MwmError, OSError) as exc:
            click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
            sys.exit(1)


@click.group(cls=_Group)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON/TOML file providing flag defaults per command.")
@click.pass_context
def main(ctx, config_path):
    """Text-guided localization, mask planning, and toy masked-reconstruction."""
    if config_path:
        ctx.default_map = _load_config_file(config_path)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

@main.command("synth")
@click.option("--n", default=10, show_default=True, help="Number of samples.")
@click.option("--seed", default=0, show_default=True)
@click.option("--size", default=64, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def synth_cmd(n, seed, size, out_dir):
    """Generate the synthetic blob corpus (images, saliency, GT masks)."""
    seed = _effective_seed(seed)
    params = {"command": "synth", "n": n, "seed": seed, "size": size}
    ids = synth.generate_dataset(out_dir, n, seed, size)
    manifest = {"config_hash": config_hash(params), "seed": seed, "size": size, "image_ids": ids}
    with atomic_write(os.path.join(out_dir, "manifest.json")) as tmp:
        with open(tmp, "w") as f:
            json.dump(manifest, f, sort_keys=True, indent=2)
            f.write("\n")
    click.echo(f"wrote {n} samples to {out_dir}")


# ---------------------------------------------------------------------------
# localize
# ---------------------------------------------------------------------------

@main.command("localize")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--connectivity", default=8, show_default=True, type=click.Choice(["4", "8"]))
@click.option("--policy", default="relative:0.5", show_default=True,
              help='Selection policy: "relative:ALPHA" or "topk:K".')
@click.option("--margin", default=0.1, show_default=True)
@click.option("--max-iters", default=100, show_default=True)
@click.option("--tol", default=1e-6, show_default=True)
@click.option("--provider-cmd", default=None,
              help="Refinement provider command; omit for the identity provider.")
@click.option("--seed", default=0, show_default=True)
def localize_cmd(data_dir, out_path, connectivity, policy, margin, max_iters, tol,
                 provider_cmd, seed):
    """Run saliency-to-ROI localization over a corpus; emit boxes JSONL."""
    seed = _effective_seed(seed)
    cfg = LocalizeConfig(
        connectivity=int(connectivity),
        policy=_policy_from_str(policy),
        margin=margin,
        max_iters=max_iters,
        tol=tol,
    )
    provider = CommandProvider(provider_cmd.split()) if provider_cmd else IdentityProvider()
    params = {"command": "localize", "connectivity": connectivity, "policy": policy,
              "margin": margin, "max_iters": max_iters, "tol": tol,
              "provider": provider_cmd or "identity", "seed": seed}
    chash = config_hash(params)

    ids = synth.list_image_ids(data_dir)
    if not ids:
        raise ConfigInvalid(f"no *.image.mwmg files in {data_dir}")
    failures = []
    records = []
    for image_id in ids:
        try:
            image = grids.load_grid(os.path.join(data_dir, f"{image_id}.image.mwmg"))
            sal = grids.load_grid(os.path.join(data_dir, f"{image_id}.saliency.mwmg"))
            sal = grids.normalize_saliency(sal)
            for box in localize(sal, image, cfg, provider):
                rec = box_record(box, image_id)
                rec["config_hash"] = chash
                rec["seed"] = seed
                records.append(rec)
        except MwmError as exc:
            failures.append({"image_id": image_id, "error": type(exc).__name__,
                             "message": str(exc)})
    with atomic_write(out_path) as tmp:
        with open(tmp, "w") as f:
            for rec in records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
    if failures:
        log = out_path + ".errors.jsonl"
        with open(log, "w") as f:
            for rec in failures:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
        click.echo(f"{len(failures)} item(s) failed; see {log}", err=True)
        sys.exit(1)
    click.echo(f"wrote {len(records)} boxes to {out_path}")


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------

@main.command("plan")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--boxes", "boxes_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--patch", default=16, show_default=True)
@click.option("--roi-ratio", default=0.9, show_default=True)
@click.option("--bg-ratio", default=None, type=float,
              help="Fixed background ratio; omit to solve for --overall.")
@click.option("--overall", default=0.4, show_default=True,
              help="Target overall ratio when --bg-ratio is not given.")
@click.option("--overlap-threshold", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True)
def plan_cmd(data_dir, boxes_path, out_dir, patch, roi_ratio, bg_ratio, overall,
             overlap_threshold, seed):
    """Build per-image mask plans from localization boxes."""
    seed = _effective_seed(seed)
    params = {"command": "plan", "patch": patch, "roi_ratio": roi_ratio,
              "bg_ratio": bg_ratio, "overall": overall,
              "overlap_threshold": overlap_threshold, "seed": seed}
    chash = config_hash(params)
    boxes_by_image: dict[str, list] = {}
    for image_id, box in read_boxes_jsonl(boxes_path):
        boxes_by_image.setdefault(image_id, []).append(box)

    os.makedirs(out_dir, exist_ok=True)
    ids = synth.list_image_ids(data_dir)
    for image_id in ids:
        image = grids.load_grid(os.path.join(data_dir, f"{image_id}.image.mwmg"))
        grid = PatchGrid(image.shape[0], image.shape[1], patch)
        labels = classify_patches(grid, boxes_by_image.get(image_id, []), overlap_threshold)
        bg = solve_bg_ratio(labels, roi_ratio, overall) if bg_ratio is None else bg_ratio
        plan = sample_plan(grid, labels, roi_ratio, bg, derive_seed(seed, image_id),
                           image_id=image_id)
        rec = plan_to_json(plan)
        rec["config_hash"] = chash
        rec["overall_ratio"] = overall_ratio(plan)
        with atomic_write(os.path.join(out_dir, f"{image_id}.plan.json")) as tmp:
            with open(tmp, "w") as f:
                json.dump(rec, f, sort_keys=True)
                f.write("\n")
    click.echo(f"wrote {len(ids)} plans to {out_dir}")


# ---------------------------------------------------------------------------
# pretrain-toy
# ---------------------------------------------------------------------------

def _train_run(images, plans, steps, hyper):
    """Cycle through (image, plan) pairs for the given number of steps."""
    model = init_model(hyper)
    losses = []
    for step in range(steps):
        image, plan = images[step % len(images)], plans[step % len(plans)]
        losses.append(train_step(model, image, plan))
    return model, losses


@main.command("pretrain-toy")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--plans", "plans_dir", required=True, type=click.Path(exists=True))
@click.option("--steps", default=200, show_default=True)
@click.option("--lr", default=0.05, show_default=True)
@click.option("--channels", default="8,16,32,64", show_default=True)
@click.option("--dec-channels", default=16, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def pretrain_toy_cmd(data_dir, plans_dir, steps, lr, channels, dec_channels, seed, out_dir):
    """Train the toy reconstruction engine; emit checkpoint, loss CSV, figure."""
    from .planner import load_plan

    seed = _effective_seed(seed)
    params = {"command": "pretrain-toy", "steps": steps, "lr": lr, "channels": channels,
              "dec_channels": dec_channels, "seed": seed}
    chash = config_hash(params)

    ids = synth.list_image_ids(data_dir)
    if not ids:
        raise ConfigInvalid(f"no images in {data_dir}")
    images, plans = [], []
    for image_id in ids:
        plan_path = os.path.join(plans_dir, f"{image_id}.plan.json")
        if not os.path.exists(plan_path):
            continue
        images.append(grids.load_grid(os.path.join(data_dir, f"{image_id}.image.mwmg")))
        plans.append(load_plan(plan_path))
    if not images:
        raise ConfigInvalid(f"no plans in {plans_dir} match images in {data_dir}")

    h, w = images[0].shape
    hyper = ToyHyper(image_h=h, image_w=w,
                     channels=tuple(int(c) for c in channels.split(",")),
                     dec_channels=dec_channels, lr=lr, seed=seed)
    model, losses = _train_run(images, plans, steps, hyper)

    os.makedirs(out_dir, exist_ok=True)
    with atomic_write(os.path.join(out_dir, "loss.csv")) as tmp:
        with open(tmp, "w", newline="") as f:
            f.write(f"# seed={seed} config_hash={chash}\n")
            writer = csv.writer(f)
            writer.writerow(["step", "loss"])
            for i, loss in enumerate(losses):
                writer.writerow([i, f"{loss:.8f}"])
    plots.plot_loss_curve(range(len(losses)), losses, os.path.join(out_dir, "loss.png"))
    with atomic_write(os.path.join(out_dir, "model.mwmt")) as tmp:
        save_model(tmp, model, extra={"config_hash": chash, "seed": seed})
    click.echo(f"final loss {losses[-1]:.6f} after {steps} steps; artifacts in {out_dir}")


# ---------------------------------------------------------------------------
# eval-occlusion
# ---------------------------------------------------------------------------

@main.command("eval-occlusion")
@click.option("--boxes", "boxes_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--figure/--no-figure", default=True, show_default=True)
@click.option("--seed", default=0, show_default=True)
def eval_occlusion_cmd(boxes_path, gt_dir, out_path, figure, seed):
    """Score localization boxes against ground-truth PGM masks."""
    seed = _effective_seed(seed)
    params = {"command": "eval-occlusion", "boxes": os.path.basename(boxes_path), "seed": seed}
    chash = config_hash(params)
    boxes_by_image: dict[str, list] = {}
    for image_id, box in read_boxes_jsonl(boxes_path):
        boxes_by_image.setdefault(image_id, []).append(box)

    rows = []
    for image_id in sorted(boxes_by_image):
        gt = grids.load_mask_pgm(os.path.join(gt_dir, f"{image_id}.gt.pgm"))
        # Multiple boxes per image score as the union of their pixels.
        pred = np.zeros_like(gt)
        for box in boxes_by_image[image_id]:
            pred[box.row_min : box.row_max + 1, box.col_min : box.col_max + 1] = 1
        rows.append((image_id, occlusion_metrics(pred, gt)))

    with atomic_write(out_path) as tmp:
        write_report_csv(tmp, rows, header_comment=f"seed={seed} config_hash={chash}")
    if figure:
        fig_path = os.path.splitext(out_path)[0] + ".png"
        plots.plot_occlusion_scores(
            [r[0] for r in rows], [r[1].precision for r in rows], [r[1].recall for r in rows],
            fig_path,
        )
    from .metrics import aggregate_scores
    mp, mr = aggregate_scores([s for _, s in rows])
    click.echo(f"mean precision {mp:.4f}, mean recall {mr:.4f} over {len(rows)} images")


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

@main.command("gradcheck")
@click.option("--configs", default=20, show_default=True)
@click.option("--epsilon", default=1e-4, show_default=True)
@click.option("--seed", default=0, show_default=True)
def gradcheck_cmd(configs, epsilon, seed):
    """Finite-difference validation of the reverse-mode gradients."""
    from .mim import grad_check
    from .planner import random_plan

    seed = _effective_seed(seed)
    worst = 0.0
    for i in range(configs):
        s = derive_seed(seed, f"gradcheck{i}")
        rng = np.random.default_rng(s)
        hyper = ToyHyper(image_h=32, image_w=32, channels=(2, 3, 4, 5), dec_channels=4,
                         seed=s)
        model = init_model(hyper)
        image = rng.uniform(0, 1, size=(32, 32)).astype(np.float32)
        plan = random_plan(PatchGrid(32, 32, 16), 0.5, s)
        err = grad_check(model, image, plan, epsilon=epsilon, seed=s)
        worst = max(worst, err)
        click.echo(f"config {i}: max relative error {err:.3e}")
    click.echo(f"worst over {configs} configs: {worst:.3e}")
    if worst >= 1e-3:
        sys.exit(1)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

@main.command("sweep")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--boxes", "boxes_path", default=None, type=click.Path(exists=True),
              help="Required for the differentiated strategy.")
@click.option("--ratios", default="0.4,0.5,0.6,0.7", show_default=True)
@click.option("--strategy", default="differentiated", show_default=True,
              type=click.Choice(["differentiated", "random"]))
@click.option("--roi-ratio", default=0.9, show_default=True)
@click.option("--steps", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def sweep_cmd(data_dir, boxes_path, ratios, strategy, roi_ratio, steps, seed, out_dir):
    """Train once per overall masking ratio; emit a (ratio, final loss) curve."""
    seed = _effective_seed(seed)
    ratio_list = [float(r) for r in ratios.split(",") if r.strip()]
    if not ratio_list:
        raise ConfigInvalid("--ratios is empty")
    if strategy == "differentiated" and not boxes_path:
        raise ConfigInvalid("differentiated sweep needs --boxes")
    params = {"command": "sweep", "ratios": ratio_list, "strategy": strategy,
              "roi_ratio": roi_ratio, "steps": steps, "seed": seed}
    chash = config_hash(params)

    ids = synth.list_image_ids(data_dir)
    if not ids:
        raise ConfigInvalid(f"no images in {data_dir}")
    images = [grids.load_grid(os.path.join(data_dir, f"{i}.image.mwmg")) for i in ids]
    boxes_by_image: dict[str, list] = {}
    if boxes_path:
        for image_id, box in read_boxes_jsonl(boxes_path):
            boxes_by_image.setdefault(image_id, []).append(box)

    h, w = images[0].shape
    results = []
    for target in ratio_list:
        plans = []
        for image_id, image in zip(ids, images):
            grid = PatchGrid(image.shape[0], image.shape[1], 16)
            item_seed = derive_seed(seed, f"{image_id}:{target}")
            if strategy == "random":
                plans.append(random_plan(grid, target, item_seed, image_id=image_id))
            else:
                labels = classify_patches(grid, boxes_by_image.get(image_id, []), 0.5)
                bg = solve_bg_ratio(labels, roi_ratio, target)
                plans.append(sample_plan(grid, labels, roi_ratio, bg, item_seed,
                                         image_id=image_id))
        hyper = ToyHyper(image_h=h, image_w=w, channels=(4, 8, 16, 32), dec_channels=8,
                         seed=seed)
        _, losses = _train_run(images, plans, steps, hyper)
        realized = float(np.mean([overall_ratio(p) for p in plans]))
        results.append((target, realized, losses[-1]))

    os.makedirs(out_dir, exist_ok=True)
    with atomic_write(os.path.join(out_dir, "sweep.csv")) as tmp:
        with open(tmp, "w", newline="") as f:
            f.write(f"# seed={seed} config_hash={chash} strategy={strategy}\n")
            writer = csv.writer(f)
            writer.writerow(["ratio", "realized_ratio", "final_loss"])
            for target, realized, loss in results:
                writer.writerow([target, f"{realized:.6f}", f"{loss:.8f}"])
    plots.plot_sweep_curve([r[0] for r in results], [r[2] for r in results],
                           os.path.join(out_dir, "sweep.png"), strategy=strategy)
    click.echo(f"swept {len(results)} ratios; artifacts in {out_dir}")


# ---------------------------------------------------------------------------
# prompt rendering (bridge interop / documentation)
# ---------------------------------------------------------------------------

@main.command("render-prompt")
@click.option("--category", required=True)
@click.option("--modality", default="")
@click.option("--style", default="sentence", type=click.Choice(["sentence", "phrase"]),
              show_default=True)
@click.option("--template", default=None, help="Override the sentence template.")
def render_prompt_cmd(category, modality, style, template):
    """Render the localization prompt for a category/modality pair."""
    tpl = PromptTemplate(template=template, style=style) if template else PromptTemplate(style=style)
    click.echo(render_prompt(tpl, category, modality))


if __name__ == "__main__":
    main()
