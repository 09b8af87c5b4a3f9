"""Command-line entry point: ``perspective-face <subcommand> ...``.

Exit codes: 0 success, 1 numerical failure (including a failed gradient
check), 2 bad input or usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import gradcheck, metrics, pnp, regressor, synth
from .errors import InputError, MissingInstance, NumericalError
from .fileio import (fmt, load_intrinsics, load_landmarks, load_pose, load_vertices,
                     save_landmarks, save_pose, save_vertices)
from .geometry import project_world
from .topology import export_obj, load_topology

log = logging.getLogger("perspective_face")

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2
GRADCHECK_TOL = 1e-4


class UsageError(InputError):
    pass


def _require_files(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise UsageError(f"{p}: no such file")


def _require_dirs(*paths):
    for p in paths:
        if not Path(p).is_dir():
            raise UsageError(f"{p}: no such directory")


def _topology(args, data_dir=None):
    path = args.topology
    if path is None and data_dir is not None and (Path(data_dir) / "topology.json").is_file():
        path = Path(data_dir) / "topology.json"
    if path is None:
        raise UsageError("no topology: pass --topology or use a dataset with topology.json")
    return load_topology(path)


def _print_pose(pose):
    print("R", " ".join(fmt(x) for x in pose.rotation.ravel()))
    print("T", " ".join(fmt(x) for x in pose.translation))


def cmd_score(args):
    _require_dirs(args.gt_dir, args.pred_dir)
    gt = metrics.load_submission(args.gt_dir)
    pred = metrics.load_submission(args.pred_dir, list(gt))
    report = metrics.score_submission(gt, pred)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    metrics.write_report(report, args.out)
    m12, m13, m14 = report.column_means_mm()
    print(f"instances {len(report.ids)}")
    print(f"mean d12_mm {fmt(m12)} d13_mm {fmt(m13)} 10*d14_mm {fmt(m14)} l_error_mm {fmt(report.mean_l_error_mm)}")
    return EXIT_OK


def cmd_fit_pnp(args):
    _require_files(args.vertices, args.landmarks, args.intrinsics)
    v = load_vertices(args.vertices)
    p = load_landmarks(args.landmarks)
    K = load_intrinsics(args.intrinsics)
    cfg = pnp.PnPConfig(max_iterations=args.max_iterations)
    result = pnp.solve_pnp(v, p, K, cfg)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        save_pose(result.pose, args.out)
    _print_pose(result.pose)
    print(f"rms {fmt(result.rms_reprojection_error)}")
    print(f"iterations {result.iterations} converged {str(result.converged).lower()}")
    return EXIT_OK


def cmd_project(args):
    _require_files(args.vertices, args.pose, args.intrinsics)
    p = project_world(load_vertices(args.vertices), load_pose(args.pose), load_intrinsics(args.intrinsics))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_landmarks(p, args.out)
    return EXIT_OK


def _ranges(args):
    ranges = synth.SynthRanges(
        depth=(args.depth_min, args.depth_max),
        yaw_deg=args.yaw, pitch_deg=args.pitch, roll_deg=args.roll,
        image_size=(args.width, args.height), fx=args.focal, fy=args.focal,
    )
    ranges.validate()
    return ranges


def cmd_synth(args):
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    ranges = _ranges(args)
    model, topo = synth.make_shape_model(args.vertices, args.basis, args.model_seed)
    instances = synth.generate_instances(model, args.n, args.seed, ranges)
    if args.sigma_px > 0:
        noisy = []
        for i, inst in enumerate(instances):
            rng = np.random.default_rng(synth.instance_seed(args.seed, i).spawn(1)[0])
            noisy.append(synth.SyntheticInstance(inst.id, inst.v_world, inst.pose, inst.K,
                                                 synth.add_landmark_noise(inst, args.sigma_px, rng), inst.coeffs))
        instances = noisy
    config = {
        "n": args.n, "seed": args.seed, "model_seed": args.model_seed,
        "n_vertices": args.vertices, "n_basis": args.basis, "sigma_px": args.sigma_px,
        "format": args.format, "ranges": synth.ranges_to_dict(ranges),
    }
    synth.write_dataset(instances, args.out, topology=topo, config=config, fmt=args.format)
    print(f"wrote {len(instances)} instances to {args.out}")
    return EXIT_OK


def cmd_train(args):
    _require_dirs(args.data)
    instances, _ = synth.load_dataset(args.data)
    topo = _topology(args, args.data)
    cfg = regressor.TrainConfig(epochs=args.epochs, lr=args.lr, batch_size=args.batch, seed=args.seed,
                                sigma_px=args.sigma_px, hidden=args.hidden, n_features=args.features)
    model, curve = regressor.train(instances, topo.edges, cfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    regressor.save_model(model, args.out)
    for epoch, loss in enumerate(curve, 1):
        log.info("epoch %d loss %s", epoch, fmt(loss))
    print(f"epoch 1 loss {fmt(curve[0])}")
    print(f"epoch {len(curve)} loss {fmt(curve[-1])}")
    return EXIT_OK


def cmd_predict(args):
    _require_files(args.model, args.intrinsics)
    _require_dirs(args.data)
    model = regressor.load_model(args.model)
    instances, _ = synth.load_dataset(args.data)
    override = load_intrinsics(args.intrinsics) if args.intrinsics else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for inst in sorted(instances, key=lambda i: i.id):
        obs = regressor.encode_features(model, inst.landmarks)
        verts, _, result = regressor.predict_with_pose(model, obs, override or inst.K)
        save_vertices(verts, out / f"{inst.id}.vertices.json")
        save_pose(result.pose, out / f"{inst.id}.pose.json")
        log.info("%s rms %s", inst.id, fmt(result.rms_reprojection_error))
    print(f"wrote {len(instances)} predictions to {out}")
    return EXIT_OK


def cmd_gradcheck(args):
    results = gradcheck.run_all(args.points, args.seed)
    ok = True
    for name, err in results.items():
        passed = err <= GRADCHECK_TOL
        ok &= passed
        print(f"{name} {fmt(err)} {'ok' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_export_obj(args):
    _require_files(args.vertices)
    topo = _topology(args)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    export_obj(load_vertices(args.vertices), topo, args.out)
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--topology", help="topology JSON file")
    common.add_argument("--seed", type=int, default=7)
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="perspective-face",
                                     description="Face mesh, landmark and 6DoF pose tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help, description=help)
        p.set_defaults(func=func)
        return p

    p = add("score", cmd_score, "Score predicted meshes and poses against ground truth.")
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--out", default="report.csv")

    p = add("fit-pnp", cmd_fit_pnp, "Recover a pose from 3D vertices and 2D landmarks.")
    p.add_argument("--vertices", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--out")
    p.add_argument("--max-iterations", type=int, default=100)

    p = add("project", cmd_project, "Project world vertices to pixels.")
    p.add_argument("--vertices", required=True)
    p.add_argument("--pose", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--out", required=True, help="landmark file (.json or .csv)")

    p = add("synth", cmd_synth, "Generate a synthetic dataset.")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--out", default="out")
    p.add_argument("--sigma-px", type=float, default=0.0, help="pixel noise added to stored landmarks")
    p.add_argument("--model-seed", type=int, default=0)
    p.add_argument("--vertices", type=int, default=1220)
    p.add_argument("--basis", type=int, default=8)
    p.add_argument("--depth-min", type=float, default=0.3)
    p.add_argument("--depth-max", type=float, default=0.9)
    p.add_argument("--yaw", type=float, default=90.0)
    p.add_argument("--pitch", type=float, default=45.0)
    p.add_argument("--roll", type=float, default=30.0)
    p.add_argument("--width", type=int, default=800)
    p.add_argument("--height", type=int, default=800)
    p.add_argument("--focal", type=float, default=1000.0)
    p.add_argument("--format", choices=["json", "csv"], default="json")

    p = add("train", cmd_train, "Train the joint mesh and landmark regressor.")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--sigma-px", type=float, default=1.0, help="feature noise drawn each epoch")
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--features", type=int, default=64)

    p = add("predict", cmd_predict, "Predict meshes and poses for a dataset.")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--intrinsics", help="use these intrinsics for every instance")

    p = add("gradcheck", cmd_gradcheck, "Finite-difference check of every analytic gradient.")
    p.add_argument("--points", type=int, default=50)

    p = add("export-obj", cmd_export_obj, "Write a mesh as Wavefront OBJ.")
    p.add_argument("--vertices", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.topology is not None:
        try:
            _require_files(args.topology)
        except UsageError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
    try:
        return args.func(args)
    except MissingInstance as exc:
        print(f"error: missing prediction for instance {exc.instance_id!r}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
