"""
Fair deepfake detection by misleading learning (fairmislead)
https://github.com/fairmislead/fairmislead

Copyright (C) 2026 The fairmislead contributors

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published by
the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

This program is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
GNU Affero General Public License for more details.

You should have received a copy of the GNU Affero General Public License
along with this program.  If not, see <https://www.gnu.org/licenses/>.
"""

import argparse
import dataclasses
import logging
import os
import sys

from fairmislead import __version__
from fairmislead.constants import DISTURBANCE_KINDS, MAX_INTENSITY
from fairmislead.data.manifest import Split, parse_manifest, subgroup_counts
from fairmislead.errors import ConfigError, FairMisleadError
from fairmislead.experiment import VARIANTS, run_variant, summarize_variants, write_sweep_csv
from fairmislead.lib.logs import setup_logging
from fairmislead.lib.termcolors import cprint
from fairmislead.lib.utils import get_sha256
from fairmislead.metrics.plots import plot_reports
from fairmislead.metrics.report import (
    EmptyReport,
    read_report_json,
    write_comparison,
    write_predictions,
    write_report_csv,
    write_report_json,
)
from fairmislead.perturb.perturb import Disturbance, perturbed_eval, perturbed_predictions
from fairmislead.runconfig import RunConfig, RunConfigLoader
from fairmislead.srm.srm import save_kernel_bank
from fairmislead.synth.synthgen import MANIFEST_FILE, generate_dataset
from fairmislead.trainer.checkpoint import load_checkpoint, save_checkpoint
from fairmislead.trainer.trainer import train_pipeline

logger = logging.getLogger("fairmislead")

ABLATIONS = {
    "no-bias": "use_bias_sampling",
    "no-contrastive": "use_contrastive",
    "no-scam": "use_scam",
}

# config sections each command reads
COMMAND_KEYS = {
    "synth": ("synth", "paths.out_dir"),
    "train": ("train", "paths.manifest", "paths.checkpoint", "paths.training_log"),
    "eval": ("report", "paths.manifest", "paths.checkpoint", "paths.reports_dir"),
    "report": ("paths.reports_dir",),
    "plot": ("paths.reports_dir",),
    "sweep": ("train", "report", "paths.manifest", "paths.reports_dir"),
}


def keys_epilog(command):
    lines = ["config keys (--set key=value):"]
    for key, default in RunConfig.documented_keys(COMMAND_KEYS[command]):
        lines.append("  {} (default: {})".format(key, default))
    return "\n".join(lines)


def _add_config_args(parser):
    parser.add_argument(
        "--config",
        default=None,
        help="YAML run configuration (default: env FAIRMISLEAD_CONFIG_YML)",
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override one config key, e.g. --set train.lr=0.0005",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        "fairmislead",
        description="Fair deepfake detection by misleading learning",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="More verbose logging")
    parser.add_argument(
        "-c",
        "--no-colors",
        action="store_true",
        help="Suppress colors in terminal (default: env ANSI_COLORS_DISABLED)",
    )
    parser.add_argument(
        "-P", "--disable-progress-bar", action="store_true", help="Hide progress bars"
    )
    parser.add_argument("--version", action="store_true", help="Show the version")
    commands = parser.add_subparsers(dest="command")

    def command(name, help_text):
        sub = commands.add_parser(
            name,
            help=help_text,
            description=help_text,
            epilog=keys_epilog(name),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        _add_config_args(sub)
        return sub

    synth = command("synth", "Generate the synthetic face-proxy dataset")
    synth.add_argument("-o", "--out-dir", default=None, help="Output directory")

    train = command("train", "Pretrain D_sub, then run misleading training")
    train.add_argument("-m", "--manifest", default=None, help="Dataset manifest CSV")
    train.add_argument("--checkpoint", default=None, help="Output checkpoint archive")
    train.add_argument("--training-log", default=None, help="Output training log CSV")
    train.add_argument(
        "--ablation",
        action="append",
        default=[],
        choices=sorted(ABLATIONS),
        help="Disable one component (repeatable)",
    )
    train.add_argument(
        "--pretrain-only", action="store_true", help="Stop after D_sub pretraining"
    )

    evaluate = command("eval", "Score a split and report detection and fairness metrics")
    evaluate.add_argument("--checkpoint", default=None, help="Checkpoint archive")
    evaluate.add_argument("-m", "--manifest", default=None, help="Dataset manifest CSV")
    evaluate.add_argument("--split", default=None, choices=[s.value for s in Split])
    evaluate.add_argument("--group-by", default=None, choices=("subgroup", "method"))
    evaluate.add_argument("--threshold", type=float, default=None)
    evaluate.add_argument(
        "--disturbance",
        default=None,
        help="<kind>:<intensity> with kind in {}, or 'all'".format(", ".join(DISTURBANCE_KINDS)),
    )
    evaluate.add_argument(
        "--intensity",
        type=int,
        default=3,
        help="Intensity used with --disturbance all (1..{})".format(MAX_INTENSITY),
    )
    evaluate.add_argument("-o", "--out-dir", default=None, help="Reports directory")

    report = command("report", "Merge report JSONs into comparison tables")
    report.add_argument("reports", nargs="+", help="Report JSON files")
    report.add_argument("-o", "--out-dir", default=None, help="Output directory")

    plot = command("plot", "Draw per-group and robustness charts from reports")
    plot.add_argument("reports", nargs="+", help="Report JSON files")
    plot.add_argument("-o", "--out-dir", default=None, help="Output directory")

    sweep = command("sweep", "Train and evaluate ablation and preprocessing variants")
    sweep.add_argument("-m", "--manifest", default=None, help="Dataset manifest CSV")
    sweep.add_argument(
        "--variants",
        default=",".join(VARIANTS),
        help="Comma separated variants among {}".format(", ".join(VARIANTS)),
    )
    sweep.add_argument("--seeds", default="0,1,2,3,4", help="Comma separated seeds")
    sweep.add_argument("-o", "--out", default=None, help="Summary CSV path")
    return parser


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


def report_name(manifest, split, stage, disturbance):
    tag = "clean" if disturbance is None or disturbance.is_identity else "{}{}".format(
        disturbance.kind, disturbance.intensity
    )
    return "{}-{}-{}-{}".format(manifest.name, split, stage, tag)


class FairMisleadCli:
    """
    Runs one subcommand. Every cmd_* method returns the paths it wrote.
    """

    def __init__(self, args):
        self.args = args
        self.progress = not args.disable_progress_bar
        self.config = RunConfigLoader.load(
            getattr(args, "config", None), overrides=getattr(args, "overrides", ())
        )

    def _path(self, key, cli_value=None):
        value = cli_value if cli_value is not None else self.config.paths[key]
        if value is None:
            raise ConfigError("no {} given (use --{} or paths.{})".format(
                key, key.replace("_", "-"), key
            ))
        return value

    def cmd_synth(self):
        out_dir = self._path("out_dir", self.args.out_dir)
        manifest = generate_dataset(
            self.config.synth, out_dir, enable_progressbar=self.progress
        )
        cprint("Synthetic dataset: {}".format(manifest.root), "green")
        for split in Split:
            counts = subgroup_counts(manifest, split)
            present = ", ".join("{} {}".format(k, n) for k, n in counts.items() if n)
            print("  {:<5} {}".format(split.value, present or "-"))
        manifest_path = os.path.join(out_dir, MANIFEST_FILE)
        print("  sha256 {}".format(get_sha256(manifest_path)))
        return [manifest_path]

    def cmd_train(self):
        manifest = parse_manifest(self._path("manifest", self.args.manifest))
        cfg = self.config.train
        if self.args.ablation:
            cfg = dataclasses.replace(
                cfg,
                ablation=dataclasses.replace(
                    cfg.ablation, **{ABLATIONS[a]: False for a in self.args.ablation}
                ),
            )
        checkpoint_path = self._path("checkpoint", self.args.checkpoint)
        log_path = self._path("training_log", self.args.training_log)

        pretrained, final, log = train_pipeline(
            cfg,
            manifest,
            pretrain_only=self.args.pretrain_only,
            enable_progressbar=self.progress,
        )
        written = list()
        if not self.args.pretrain_only:
            pretrain_path = os.path.join(
                os.path.dirname(checkpoint_path), _stem(checkpoint_path) + ".pretrain.zip"
            )
            save_checkpoint(pretrained, pretrain_path)
            written.append(pretrain_path)
        save_checkpoint(final, checkpoint_path)
        log.write(log_path)
        written.extend([checkpoint_path, log_path])
        if final.model.preprocessor.adaptive:
            bank_stem = os.path.join(
                os.path.dirname(checkpoint_path), _stem(checkpoint_path) + ".srm"
            )
            written.extend(save_kernel_bank(final.model.bank, bank_stem))
        cprint(
            "Trained {} checkpoint: {} ({} steps)".format(final.stage, checkpoint_path, len(log)),
            "green",
        )
        return written

    def _disturbances(self):
        text = self.args.disturbance
        if text is None:
            return [None]
        if text.strip().lower() == "all":
            return [None] + [Disturbance(k, self.args.intensity) for k in DISTURBANCE_KINDS]
        return [Disturbance.parse(text)]

    def cmd_eval(self):
        ckpt = load_checkpoint(self._path("checkpoint", self.args.checkpoint))
        manifest = parse_manifest(self._path("manifest", self.args.manifest))
        report_cfg = self.config.report
        split = self.args.split or report_cfg["split"]
        group_by = self.args.group_by or report_cfg["group_by"]
        threshold = (
            self.args.threshold if self.args.threshold is not None else report_cfg["threshold"]
        )
        out_dir = self._path("reports_dir", self.args.out_dir)
        os.makedirs(out_dir, exist_ok=True)

        written = list()
        for disturbance in self._disturbances():
            records = perturbed_predictions(
                ckpt,
                manifest,
                split,
                disturbance,
                seed=report_cfg["seed"],
                enable_progressbar=self.progress,
            )
            report = perturbed_eval(
                ckpt,
                manifest,
                split,
                disturbance,
                threshold=threshold,
                group_by=group_by,
                records=records,
            )
            name = report_name(manifest, split, ckpt.stage, disturbance)
            base = os.path.join(out_dir, name)
            write_predictions(records, base + ".predictions.csv")
            write_report_json(report, base + ".report.json")
            write_report_csv(report, base + ".report.csv")
            written.extend(
                [base + ".predictions.csv", base + ".report.json", base + ".report.csv"]
            )
            fairness = report.fairness
            cprint(
                "{}: AUC {:.4f}  F_FPR {}  F_MAG {}  F_MEO {}".format(
                    name,
                    report.overall["auc"],
                    _fmt(fairness["f_fpr"]),
                    _fmt(fairness["f_mag_auc"]),
                    _fmt(fairness["f_meo"]),
                ),
                "green",
            )
        return written

    def _read_reports(self):
        if not self.args.reports:
            raise EmptyReport("no report files given")
        return [(_stem(_stem(p)), read_report_json(p)) for p in self.args.reports]

    def cmd_report(self):
        out_dir = self._path("reports_dir", self.args.out_dir)
        paths = write_comparison(self._read_reports(), out_dir)
        cprint("Comparison written to {}".format(out_dir), "green")
        return list(paths)

    def cmd_plot(self):
        out_dir = self._path("reports_dir", self.args.out_dir)
        paths = plot_reports(self._read_reports(), out_dir)
        cprint("{} chart(s) written to {}".format(len(paths), out_dir), "green")
        return paths

    def cmd_sweep(self):
        manifest = parse_manifest(self._path("manifest", self.args.manifest))
        variants = [v.strip() for v in self.args.variants.split(",") if v.strip()]
        try:
            seeds = [int(s) for s in self.args.seeds.split(",") if s.strip()]
        except ValueError:
            raise ConfigError("--seeds must be comma separated integers")
        report_cfg = self.config.report
        results = dict()
        for variant in variants:
            results[variant] = run_variant(
                self.config.train,
                manifest,
                seeds,
                variant,
                split=report_cfg["split"],
                threshold=report_cfg["threshold"],
                group_by=report_cfg["group_by"],
                enable_progressbar=self.progress,
            )
        rows = summarize_variants(results)
        out = self.args.out or os.path.join(self._path("reports_dir"), "sweep.csv")
        os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        write_sweep_csv(rows, out)
        for row in rows:
            print("  {:<15} AUC {}  F_FPR {}  F_MAG {}".format(
                row[0], _fmt(row[2]), _fmt(row[3]), _fmt(row[4])
            ))
        return [out]

    def run(self):
        return getattr(self, "cmd_{}".format(self.args.command))()


def _fmt(value):
    return "-" if value is None else "{:.4f}".format(value)


def main(argv=None):
    """
    Console entry point
    :return: process exit code
    :rtype: int
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.no_colors:
        os.environ["FAIRMISLEAD_NO_COLORS"] = "true"
    if args.version:
        cprint("fairmislead", "green")
        print(__version__)
        return 0
    if not args.command:
        parser.print_help()
        return 2
    setup_logging(args.verbose)
    logger.info("[CLI] fairmislead {} {}".format(__version__, args.command))
    try:
        FairMisleadCli(args).run()
    except FairMisleadError as e:
        logger.error("[CLI][E] {}: {}".format(type(e).__name__, e))
        cprint("{}: {}".format(type(e).__name__, e), "red", file=sys.stderr)
        return e.exit_code
    return 0
