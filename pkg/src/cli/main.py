"""
roll-match 命令列介面
子命令：match、estimate、falsify、simulate

結束代碼：0 成功、2 輸入驗證錯誤、3 無可行配對設計、64 用法錯誤
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from ..core.config.study_config import StudyConfig, StudyConfigManager
from ..core.estimate.estimators import att_bias_corrected, att_did
from ..core.estimate.outcome_model import fit_mu0
from ..core.exceptions import ArtifactMismatchError, ConfigError, RollMatchError
from ..core.falsify.timepoint_test import FalsifySpec, scan_timepoints, timepoint_test
from ..core.inference.bootstrap import BootstrapSpec, block_bootstrap
from ..core.inference.wls import wls_att
from ..core.matching.balance import balance_frame, balance_table, write_balance_csv
from ..core.matching.base import MatchedDesign
from ..core.matching.distance import DistanceSpec
from ..core.matching.manager import MatchingManager
from ..core.panel.dataset import PanelDataset, load_panel
from ..core.simlab.experiments import (
    ALL_METHODS, COVERAGE_METHODS, OUTCOME_MODELS, run_coverage_experiment, run_falsification_experiment
)
from ..core.simlab.scenarios import Scenario, ScenarioSpec
from ..core.utils.logger import enable_file_log, log_debug, log_error, log_info, set_verbose
from .manifest import RunManifest, read_json, write_json

EXIT_USAGE = 64


class UsageArgumentParser(argparse.ArgumentParser):
    """用法錯誤時印出說明並以 64 結束"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_options() -> argparse.ArgumentParser:
    # SUPPRESS 讓子命令位置的旗標不會覆寫主命令位置的值
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=argparse.SUPPRESS, help='study config JSON')
    common.add_argument('--seed', type=int, default=argparse.SUPPRESS, help='random seed (default 0)')
    common.add_argument('--out', default=argparse.SUPPRESS, help='output directory (default ./out)')
    common.add_argument('--threads', type=int, default=argparse.SUPPRESS, help='worker threads (default 1)')
    common.add_argument('--verbose', action='store_true', default=argparse.SUPPRESS, help='debug logging')
    common.add_argument('--log-dir', default=argparse.SUPPRESS, help='also write a log file here')
    return common


def _study_options(parser: argparse.ArgumentParser):
    parser.add_argument('--data', required=True, help='long-format panel CSV')
    parser.add_argument('--covariates', nargs='+', help='override covariate columns')
    parser.add_argument('--L', type=int, help='number of lagged timepoints')


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    parser = UsageArgumentParser(
        prog='roll-match',
        description='Matching under rolling enrollment: GroupMatch designs, bias-corrected ATT, '
                    'block bootstrap and timepoint falsification tests.',
        parents=[common]
    )
    subparsers = parser.add_subparsers(dest='command', metavar='{match,estimate,falsify,simulate}')
    subparsers.required = True

    match = subparsers.add_parser('match', parents=[common], help='build a matched design')
    _study_options(match)
    match.add_argument('--variant', default='instance', help='instance | trajectory | without')
    match.add_argument('--C', type=int, help='controls per treated instance')
    match.add_argument('--metric', choices=['mahalanobis', 'euclidean', 'scaled-euclidean'])
    match.add_argument('--caliper', type=float)
    match.add_argument('--allow-drop', action='store_true', help='drop infeasible treated instances')

    estimate = subparsers.add_parser('estimate', parents=[common], help='estimate the ATT with inference')
    _study_options(estimate)
    estimate.add_argument('--design', required=True, help='design.json written by match')
    estimate.add_argument('--did', action='store_true', help='difference-in-differences estimator')
    estimate.add_argument('--no-bias-correction', action='store_true', help='use mu0 = 0')
    estimate.add_argument('--B', type=int, help='bootstrap replicates')
    estimate.add_argument('--alpha', type=float)
    estimate.add_argument('--method', choices=['nonparametric', 'bayesian'], help='bootstrap resampler')
    estimate.add_argument('--variance', nargs='*', choices=['naive', 'corrected', 'cluster'], default=[],
                          help='also report WLS baselines with these variances')
    estimate.add_argument('--dump-replicates', action='store_true', help='write replicates.csv')

    falsify = subparsers.add_parser('falsify', parents=[common], help='timepoint agnosticism test')
    _study_options(falsify)
    falsify.add_argument('--t0', type=int)
    falsify.add_argument('--t1', type=int)
    falsify.add_argument('--scan', type=int, nargs='+', help='test every consecutive pair of these times')
    falsify.add_argument('--B', type=int, help='sign-flip draws')
    falsify.add_argument('--caliper', type=float)
    falsify.add_argument('--split-fraction', type=float)

    simulate = subparsers.add_parser('simulate', parents=[common], help='Monte Carlo experiments')
    simulate.add_argument('--experiment', choices=['coverage', 'falsification'], default='coverage')
    simulate.add_argument('--scenario', choices=[s.value for s in Scenario], default=Scenario.LINEAR.value)
    simulate.add_argument('--reps', type=int, default=1000)
    simulate.add_argument('--B', type=int, help='bootstrap replicates or sign-flip draws')
    simulate.add_argument('--alpha', type=float, default=0.05)
    simulate.add_argument('--methods', nargs='+', choices=list(ALL_METHODS), default=list(COVERAGE_METHODS))
    simulate.add_argument('--variant', default='instance')
    simulate.add_argument('--outcome-model', choices=list(OUTCOME_MODELS), default='ols')
    simulate.add_argument('--n-treated', type=int)
    simulate.add_argument('--n-control', type=int)
    simulate.add_argument('--delta', type=float, default=0.25)
    simulate.add_argument('--gammas', type=float, nargs='+', default=[0.0, 0.1, 0.25])
    return parser


class CommandRunner:
    """依解析後的參數執行子命令"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.seed = getattr(args, 'seed', 0)
        self.out_dir = Path(getattr(args, 'out', 'out'))
        self.threads = getattr(args, 'threads', 1)
        self.config_file = getattr(args, 'config', None)
        self.config_manager = StudyConfigManager(self.config_file)
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    def _manifest(self) -> RunManifest:
        manifest = RunManifest(subcommand=self.args.command, seed=self.seed)
        if self.config_file:
            manifest.add_input('config', self.config_file)
        return manifest

    def _study_config(self) -> StudyConfig:
        args = self.args
        covariates = tuple(args.covariates) if getattr(args, 'covariates', None) else None
        return self.config_manager.get_study_config().with_overrides(
            L=getattr(args, 'L', None),
            C=getattr(args, 'C', None),
            covariate_names=covariates,
            did=True if getattr(args, 'did', False) else None
        )

    def _load(self, manifest: RunManifest) -> PanelDataset:
        manifest.add_input('data', self.args.data)
        return load_panel(self.args.data, self._study_config())

    def _finish(self, manifest: RunManifest, resolved: dict) -> int:
        manifest.config = resolved
        path = manifest.write(self.out_dir)
        log_info(f"輸出目錄 {self.out_dir}, manifest: {path.name}")
        return 0

    def run(self) -> int:
        handler = getattr(self, f"cmd_{self.args.command}")
        return handler()

    def cmd_match(self) -> int:
        args = self.args
        manifest = self._manifest()
        dataset = self._load(manifest)
        spec = self.config_manager.get_distance_spec()
        overrides = {key: value for key, value in (('metric', args.metric), ('caliper', args.caliper)) if value}
        if overrides:
            spec = DistanceSpec.from_dict({**spec.to_dict(), **overrides})

        manager = MatchingManager()
        design = manager.build_design(dataset, spec, dataset.config.C, args.variant,
                                      allow_drop=args.allow_drop, workers=self.threads)
        design = replace(design, dataset_hash=manifest.input_hashes['data'])
        rows = balance_table(dataset, design)

        manifest.add_artifact(write_json(self.out_dir / 'design.json', design.to_dict()))
        manifest.add_artifact(write_balance_csv(rows, self.out_dir / 'balance.csv'))

        print(f"variant={design.variant.value} C={design.C} N1={design.n_treated} "
              f"dropped={len(design.dropped)} total_distance={design.total_distance:.6f}")
        print(balance_frame(rows).to_string(index=False, float_format=lambda v: f'{v:.4f}'))
        resolved = self.config_manager.resolved()
        resolved['study'] = dataset.config.to_dict()
        resolved['distance'] = spec.to_dict()
        resolved['variant'] = design.variant.value
        resolved['allow_drop'] = args.allow_drop
        return self._finish(manifest, resolved)

    def cmd_estimate(self) -> int:
        args = self.args
        manifest = self._manifest()
        dataset = self._load(manifest)
        manifest.add_input('design', args.design)
        design_data = read_json(args.design)
        if design_data.get('dataset_hash') != manifest.input_hashes['data']:
            raise ArtifactMismatchError(
                f"design {args.design} was built from a different dataset (hash mismatch), refusing to estimate"
            )
        design = MatchedDesign.from_dict(design_data)

        model = None if args.no_bias_correction else fit_mu0(dataset)
        result = att_did(dataset, design, model) if args.did else att_bias_corrected(dataset, design, model)

        options = self.config_manager.get_bootstrap_options()
        bootstrap_spec = BootstrapSpec(
            B=args.B or options['B'],
            alpha=args.alpha or options['alpha'],
            seed=self.seed,
            method=args.method or options['method']
        )
        inference = [block_bootstrap(result, bootstrap_spec, workers=self.threads)]
        inference.extend(wls_att(dataset, design, variance=v, alpha=bootstrap_spec.alpha) for v in args.variance)

        payload = {
            'estimator': result.to_dict(),
            'inference': [item.to_dict() for item in inference],
            'design': {'variant': design.variant.value, 'C': design.C, 'n_treated': design.n_treated},
            'outcome_model': 'none' if model is None else {
                'intercept': model.intercept,
                'coefficients': model.coefficients.tolist(),
                'dropped_columns': list(model.dropped_columns),
                'n_used': model.n_used,
                'residual_variance': model.residual_variance,
            },
        }
        manifest.add_artifact(write_json(self.out_dir / 'result.json', payload))
        if args.dump_replicates:
            manifest.add_artifact(inference[0].write_replicates_csv(self.out_dir / 'replicates.csv'))

        print(f"{result.kind.value}: estimate={result.estimate:.6f} N1={result.n_treated}")
        for item in inference:
            print(f"  {item.method.value}: [{item.ci_lower:.6f}, {item.ci_upper:.6f}] se={item.std_error:.6f}")
        resolved = self.config_manager.resolved()
        resolved['study'] = dataset.config.to_dict()
        resolved['bootstrap'] = {'B': bootstrap_spec.B, 'alpha': bootstrap_spec.alpha, 'method': bootstrap_spec.method}
        resolved['wls_variance'] = list(args.variance)
        resolved['bias_correction'] = model is not None
        return self._finish(manifest, resolved)

    def cmd_falsify(self) -> int:
        args = self.args
        manifest = self._manifest()
        dataset = self._load(manifest)
        options = self.config_manager.get_falsify_options()
        caliper = args.caliper if args.caliper is not None else options['caliper']
        split_fraction = args.split_fraction if args.split_fraction is not None else options['split_fraction']
        B = args.B or options['B']

        if args.scan:
            template = FalsifySpec(t0=args.scan[0], t1=args.scan[-1], B=B, seed=self.seed,
                                   caliper=caliper, split_fraction=split_fraction)
            results = scan_timepoints(dataset, args.scan, template, workers=self.threads)
            payload = {'scan': [r.to_dict() for r in results]}
        else:
            if args.t0 is None or args.t1 is None:
                raise ConfigError("falsify needs --t0 and --t1 (or --scan)")
            spec = FalsifySpec(t0=args.t0, t1=args.t1, B=B, seed=self.seed,
                               caliper=caliper, split_fraction=split_fraction)
            results = [timepoint_test(dataset, spec, workers=self.threads)]
            payload = results[0].to_dict()

        manifest.add_artifact(write_json(self.out_dir / 'falsify.json', payload))
        for r in results:
            print(f"t0={r.t0} t1={r.t1} pairs={r.n_pairs} statistic={r.statistic:.6f} p={r.p_value:.4f}")
        resolved = self.config_manager.resolved()
        resolved['study'] = dataset.config.to_dict()
        resolved['falsify'] = {'B': B, 'caliper': caliper, 'split_fraction': split_fraction}
        return self._finish(manifest, resolved)

    def cmd_simulate(self) -> int:
        args = self.args
        manifest = self._manifest()
        if args.experiment == 'falsification':
            report = run_falsification_experiment(
                gammas=args.gammas, reps=args.reps, B=args.B or 1000, seed=self.seed,
                n_control=args.n_control or 1000, alpha=args.alpha, workers=self.threads
            )
        else:
            spec = ScenarioSpec(scenario=Scenario(args.scenario), n_treated=args.n_treated,
                                n_control=args.n_control, delta=args.delta, seed=self.seed)
            report = run_coverage_experiment(
                spec, reps=args.reps, methods=args.methods, B=args.B or 500, variant=args.variant,
                outcome_model=args.outcome_model, alpha=args.alpha, workers=self.threads
            )

        table = report.render_table()
        manifest.add_artifact(write_json(self.out_dir / 'report.json', report.to_dict()))
        table_path = self.out_dir / 'report.txt'
        table_path.write_text(table, encoding='utf-8')
        manifest.add_artifact(table_path)
        print(table, end='')
        return self._finish(manifest, {'experiment': args.experiment, **report.settings})


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, 'verbose', False):
        set_verbose(True)
    if getattr(args, 'log_dir', None):
        log_debug(f"日誌檔: {enable_file_log(args.log_dir)}")

    try:
        return CommandRunner(args).run()
    except RollMatchError as e:
        log_error(str(e))
        print(str(e), file=sys.stderr)
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
