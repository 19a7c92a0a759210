#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
命令行前端

子命令: fit, predict, optimize, pareto, simulate, temperature, presets
退出码: 0 成功，1 输入或定义域错误，2 数值结果被标记（未收敛、训练发散）
"""

import argparse
import math
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from config import load_config, get_section, load_presets, get_preset
from core import (
    DirectionSpec, DplParams, MetricWeights, SimConfig, FitOptions, DplError, ParameterError, ConfigError,
    analyze_critical_point, overfit_threshold, predict_curve, fit_full, optimize_ratios,
    grid_oracle, temperature_baseline, temperature_weights, detect_collapse, run_sweep,
    balanced_config, imbalanced_config
)
from core.data_io import (
    CURVE_COLUMNS, SWEEP_COLUMNS, read_observations, read_sweep, read_json, read_directions,
    write_csv, save_rows_to_excel
)
from utils import info, debug, warning, exception, set_verbose, set_command, write_json
from . import __version__
from .manifest import RunManifest

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FLAGGED = 2

FORMATS = ('json', 'csv')


class _Parser(argparse.ArgumentParser):
    """参数错误按输入错误处理（退出码1），退出码2留给数值标记"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: 错误: {message}\n")


# ---- 输入 ----


def _float_list(text: str, name: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError as e:
        raise ParameterError(name, f"无法解析数值列表 '{text}'") from e


def _parse_grid(text: Optional[str], section: Dict[str, float]) -> List[float]:
    """网格: "start:stop:step" 或逗号分隔的比例列表，为空时使用配置中的默认网格"""
    if text and ':' not in text:
        return _float_list(text, 'grid')
    if text:
        parts = _float_list(text.replace(':', ','), 'grid')
        if len(parts) != 3:
            raise ParameterError('grid', "网格格式应为 start:stop:step")
        start, stop, step = parts
    else:
        start, stop, step = section['grid_start'], section['grid_stop'], section['grid_step']
    if not (step > 0.0 and stop >= start):
        raise ParameterError('grid', f"无效的网格 {start}:{stop}:{step}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [float(v) for v in np.round(start + step * np.arange(count), 12)]


def _parse_direction(text: str) -> DirectionSpec:
    name, sep, size = text.rpartition(':')
    if not sep or not name:
        raise ParameterError('direction', f"方向格式应为 名称:数据量，当前 '{text}'")
    try:
        return DirectionSpec(name, float(size))
    except ValueError as e:
        raise ParameterError('direction', f"无法解析数据量 '{size}'") from e


def _load_params(args, manifest: RunManifest):
    """读取参数文件或预设，返回 (参数, 参数文件内容或None)"""
    if args.params and args.preset:
        raise ParameterError('params', "--params 和 --preset 只能选一个")
    if args.params:
        document = read_json(args.params)
        manifest.add_input(args.params)
        if not isinstance(document, dict):
            raise ParameterError('params', "参数文件应为JSON对象")
        return DplParams.from_dict(document), document
    if args.preset:
        preset = get_preset(args.preset)
        info(f"使用预设参数: {preset.label}")
        return preset.to_params(), None
    raise ParameterError('params', "需要 --params 或 --preset")


def _series_directions(document: Optional[dict]) -> List[DirectionSpec]:
    """
    从拟合报告中取方向

    同名方向有多个数据量时（数据量扫描），取观测最多的一组，并列时取数据量最小的一组
    """
    series = (document or {}).get('series') or []
    chosen: Dict[str, dict] = {}
    for entry in series:
        name = str(entry['direction'])
        current = chosen.get(name)
        rank = (-int(entry.get('n', 0)), float(entry['data_size_millions']))
        if current is None or rank < (-int(current.get('n', 0)), float(current['data_size_millions'])):
            chosen[name] = entry
    if len(chosen) < len(series):
        debug(f"拟合报告中有 {len(series)} 组数据，按方向名称保留 {len(chosen)} 组")
    return [DirectionSpec(name, float(entry['data_size_millions'])) for name, entry in chosen.items()]


def _load_directions(args, manifest: RunManifest, document: Optional[dict]) -> List[DirectionSpec]:
    if args.directions:
        manifest.add_input(args.directions)
        return read_directions(args.directions)
    if args.direction:
        return [_parse_direction(text) for text in args.direction]
    directions = _series_directions(document)
    if not directions:
        raise ParameterError('directions', "需要 --directions 文件或 --direction 名称:数据量")
    return directions


# ---- 输出 ----


def _output_format(args, default: str) -> str:
    if args.format:
        return args.format
    ext = os.path.splitext(args.output or '')[1].lower()
    if ext == '.json':
        return 'json'
    if ext in ('.csv', '.txt'):
        return 'csv'
    return default


def _emit(args, manifest: RunManifest, payload: Dict[str, object],
          rows: Optional[Sequence[Dict[str, object]]] = None,
          columns: Optional[Sequence[str]] = None, default: str = 'json'):
    """按 --format/--output 写出结果，文件输出旁边附带完整运行清单"""
    output = args.output
    if rows is not None and output and output.lower().endswith('.xlsx'):
        save_rows_to_excel(rows, columns, output)
    elif rows is not None and _output_format(args, default) == 'csv':
        write_csv(rows, columns, output)
    else:
        document = dict(payload)
        document['manifest'] = manifest.deterministic()
        write_json(document, output)
        if output and output != '-':
            info(f"结果已保存到: {output}")
    manifest.write_sidecar(output)


# ---- 子命令 ----


def cmd_fit(args, config, manifest: RunManifest) -> int:
    observations = read_observations(args.observations)
    manifest.add_input(args.observations)
    report = fit_full(observations, FitOptions.from_config(get_section(config, 'fitting')))

    for key, value in report.r_squared.items():
        info(f"{key}: r² = {value if value is None else round(value, 6)}")
    rows = [{'parameter': name, 'value': value}
            for name, value in report.params.to_dict().items() if name != 'biases']
    rows += [{'parameter': f'bias[{key}]', 'value': value} for key, value in report.params.biases.items()]
    _emit(args, manifest, report.to_dict(), rows, ['parameter', 'value'])

    if not report.converged:
        warning("拟合未收敛: " + ', '.join(s.name for s in report.steps if not s.converged))
        return EXIT_FLAGGED
    return EXIT_OK


def cmd_predict(args, config, manifest: RunManifest) -> int:
    params, document = _load_params(args, manifest)
    directions = _load_directions(args, manifest, document)
    grid = _parse_grid(args.grid, get_section(config, 'predict'))

    rows, curves, critical = [], [], {}
    for direction in directions:
        curve = predict_curve(params, direction, grid, strict=args.strict)
        report = analyze_critical_point(params, direction)
        critical[direction.name] = report.to_dict()
        if report.ratio is not None:
            info(f"{direction.name} (D={direction.data_size!r}): 临界点 p* = {report.ratio:.6f}")
        else:
            info(f"{direction.name} (D={direction.data_size!r}): 无内部临界点 ({report.status})")
        curves.append({
            'direction': direction.name,
            'data_size_millions': direction.data_size,
            'ratios': list(curve.ratios),
            'losses': list(curve.losses),
            'extrapolated': list(curve.extrapolated),
            'bias_missing': curve.bias_missing
        })
        rows += [{'direction': direction.name, 'sampling_ratio': p, 'predicted_loss': loss}
                 for p, loss in curve.points]

    payload = {
        'params': params.to_dict(),
        'overfit_threshold': overfit_threshold(params),
        'critical_points': critical,
        'curves': curves
    }
    _emit(args, manifest, payload, rows, CURVE_COLUMNS, default='csv')
    return EXIT_OK


def cmd_optimize(args, config, manifest: RunManifest) -> int:
    section = get_section(config, 'optimizer')
    params, document = _load_params(args, manifest)
    directions = _load_directions(args, manifest, document)
    n = len(directions)
    weights = MetricWeights.parse(args.weights, n) if args.weights else MetricWeights.uniform(n)
    floor = args.floor if args.floor is not None else float(section['floor'])

    solution = optimize_ratios(
        params, directions, weights,
        floor=floor,
        zero_weight_policy=args.zero_weight_policy or section['zero_weight_policy'],
        starts=int(section['starts']),
        seed=args.seed if args.seed is not None else int(section['seed'])
    )
    temperatures = _float_list(args.temperatures, 'temperatures') if args.temperatures else section['temperatures']
    table = temperature_baseline(params, directions, weights, temperatures)

    info(f"DPL: {[round(v, 4) for v in solution.ratios]} 目标 {solution.objective:.6f}")
    if solution.bias_missing:
        warning(f"以下方向没有偏置项，预测损失按 M=0 计算: {', '.join(solution.bias_missing)}")
    for row in table:
        info(f"T={row.temperature:g}: {[round(v, 4) for v in row.ratios]} 目标 {row.objective:.6f}")

    payload = solution.to_dict()
    payload['temperature_baseline'] = [row.to_dict() for row in table]
    if args.oracle_resolution is not None:
        oracle = grid_oracle(params, directions, weights, resolution=args.oracle_resolution, floor=floor)
        payload['grid_oracle'] = oracle.to_dict()
        info(f"网格穷举: {[round(v, 4) for v in oracle.ratios]} 目标 {oracle.objective:.6f}")

    rows = [{'direction': d.name, 'data_size_millions': d.data_size, 'weight': w,
             'sampling_ratio': p, 'predicted_loss': loss}
            for d, w, p, loss in zip(directions, weights.r, solution.ratios, solution.losses)]
    _emit(args, manifest, payload, rows,
          ['direction', 'data_size_millions', 'weight', 'sampling_ratio', 'predicted_loss'])
    return EXIT_OK if solution.converged else EXIT_FLAGGED


def cmd_pareto(args, config, manifest: RunManifest) -> int:
    points, names = read_sweep(args.sweep_file, sweep=args.sweep)
    manifest.add_input(args.sweep_file)
    tolerance = args.tolerance if args.tolerance is not None else float(get_section(config, 'pareto')['tolerance'])
    report = detect_collapse(points, tolerance=tolerance, names=names)

    info(f"帕累托前沿塌缩: {'是' if report.collapsed else '否'}，被支配点 {report.dominated_indices}")
    payload = report.to_dict()
    payload['directions'] = names
    payload['points'] = [{'ratios': list(p.ratios), 'losses': list(p.losses.losses)} for p in points]
    rows = [t.to_dict() for t in report.per_direction]
    _emit(args, manifest, payload, rows, ['name', 'classification', 'minimum_ratio', 'minimum_loss'])
    return EXIT_OK


def _simulation_config(args, config) -> SimConfig:
    """默认值 <- 配置文件 simulator 节 <- 模拟配置文件 <- 命令行参数"""
    overrides: Dict[str, object] = dict(get_section(config, 'simulator'))
    if args.sim_config:
        document = read_json(args.sim_config)
        if not isinstance(document, dict):
            raise ParameterError('config', "模拟配置应为JSON对象")
        overrides.update(document)
    if args.steps is not None:
        overrides['steps'] = args.steps
    if args.seeds is not None:
        overrides['seeds'] = list(range(args.seeds))
    if args.workers is not None:
        overrides['workers'] = args.workers
    if args.seed is not None:
        overrides['master_seed'] = args.seed

    merged = (balanced_config() if args.balanced else imbalanced_config()).to_dict()
    if 'tasks' in overrides and 'grid' not in overrides:
        merged.pop('grid')
    merged.update(overrides)
    return SimConfig.from_dict(merged)


def _detail_path(args) -> Optional[str]:
    if args.detail:
        return args.detail
    if args.output and args.output != '-':
        return os.path.splitext(args.output)[0] + '.detail.json'
    return None


def cmd_simulate(args, config, manifest: RunManifest) -> int:
    sim = _simulation_config(args, config)
    if args.sim_config:
        manifest.add_input(args.sim_config)
    manifest.config = dict(manifest.config, simulator=sim.to_dict())

    def progress(done: int, total: int, message: str):
        debug(f"[{done}/{total}] {message}")

    result = run_sweep(sim, progress_callback=progress)
    points = result.to_sweep_points()
    if len(points) >= 3:
        report = detect_collapse(points, names=result.task_names())
        info(f"主扫描塌缩: {'是' if report.collapsed else '否'} {report.per_direction_monotonicity}")

    detail = result.to_dict()
    if _output_format(args, 'csv') == 'json':
        _emit(args, manifest, detail)
    else:
        write_csv(result.to_rows(), SWEEP_COLUMNS, args.output)
        detail_path = _detail_path(args)
        if detail_path:
            detail['manifest'] = manifest.deterministic()
            write_json(detail, detail_path)
            info(f"详细结果已保存到: {detail_path}")
        manifest.write_sidecar(args.output)

    return EXIT_FLAGGED if result.flagged else EXIT_OK


def cmd_temperature(args, config, manifest: RunManifest) -> int:
    if bool(args.shares) == bool(args.sizes):
        raise ParameterError('shares', "需要 --shares 或 --sizes 之一")
    if args.shares:
        shares = _float_list(args.shares, 'shares')
    else:
        sizes = _float_list(args.sizes, 'sizes')
        if any(not (math.isfinite(s) and s > 0.0) for s in sizes):
            raise ParameterError('sizes', "数据量必须为正")
        total = math.fsum(sizes)
        shares = [s / total for s in sizes]
    temperatures = args.T or get_section(config, 'optimizer')['temperatures']

    results, rows = [], []
    for t in temperatures:
        weights = [float(v) for v in temperature_weights(shares, float(t))]
        info(f"T={float(t):g}: {[round(v, 4) for v in weights]}")
        results.append({'T': float(t), 'weights': weights})
        rows += [{'T': float(t), 'index': i, 'share': s, 'weight': w}
                 for i, (s, w) in enumerate(zip(shares, weights))]
    _emit(args, manifest, {'shares': shares, 'rows': results}, rows, ['T', 'index', 'share', 'weight'])
    return EXIT_OK


def cmd_presets(args, config, manifest: RunManifest) -> int:
    if args.label:
        presets = [get_preset(args.label)]
    else:
        presets = list(load_presets().values())
    payload = {'presets': [dict(p.to_dict(), description=p.description) for p in presets]}
    rows = [p.to_dict() for p in presets]
    _emit(args, manifest, payload, rows, ['label', 'k', 'alpha', 'q', 'beta', 'gamma', 'b'])
    return EXIT_OK


# ---- 参数解析 ----


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=None, help="随机种子")
    common.add_argument('-o', '--output', default=None, help="输出文件，缺省写到stdout")
    common.add_argument('--format', choices=FORMATS, default=None, help="输出格式")
    common.add_argument('--config', default=None, help="配置文件路径")
    common.add_argument('-v', '--verbose', action='store_true', help="输出调试日志")
    return common


def _add_model_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--params', default=None, help="参数JSON或拟合报告")
    parser.add_argument('--preset', default=None, help="预设名称")
    parser.add_argument('--directions', default=None, help="方向列表JSON [{name, data_size_millions}]")
    parser.add_argument('--direction', action='append', default=None, metavar='NAME:SIZE',
                        help="单个方向，可重复")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    # 公共参数只挂在子命令上，写在子命令之后
    parser = _Parser(prog='dplopt', description="双幂律采样比例工具")
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    commands = parser.add_subparsers(dest='command', required=True, metavar='COMMAND')

    fit = commands.add_parser('fit', parents=[common], help="三步拟合双幂律参数")
    fit.add_argument('observations', help="实验日志 (csv/txt/xlsx)")
    fit.set_defaults(handler=cmd_fit)

    predict = commands.add_parser('predict', parents=[common], help="预测损失曲线和临界点")
    _add_model_arguments(predict)
    predict.add_argument('--grid', default=None, help="start:stop:step 或逗号分隔的比例")
    predict.add_argument('--strict', action='store_true', help="缺少偏置项时报错")
    predict.set_defaults(handler=cmd_predict)

    optimize = commands.add_parser('optimize', parents=[common], help="求最优采样比例")
    _add_model_arguments(optimize)
    optimize.add_argument('--weights', default=None, help="指标权重 r1,r2,...，缺省为算术平均")
    optimize.add_argument('--floor', type=float, default=None, help="采样比例下限")
    optimize.add_argument('--zero-weight-policy', choices=('uniform', 'data_share'), default=None)
    optimize.add_argument('--temperatures', default=None, help="对比的温度列表 1,2,5,...")
    optimize.add_argument('--oracle-resolution', type=float, default=None, help="同时计算网格穷举解")
    optimize.set_defaults(handler=cmd_optimize)

    pareto = commands.add_parser('pareto', parents=[common], help="检测帕累托前沿塌缩")
    pareto.add_argument('sweep_file', help="扫描结果 (csv/json)")
    pareto.add_argument('--tolerance', type=float, default=None, help="单调性容差")
    pareto.add_argument('--sweep', default=None, help="扫描标签，缺省为 main")
    pareto.set_defaults(handler=cmd_pareto)

    simulate = commands.add_parser('simulate', parents=[common], help="运行多任务训练扫描")
    simulate.add_argument('sim_config', nargs='?', default=None, help="模拟配置JSON")
    simulate.add_argument('--steps', type=int, default=None)
    simulate.add_argument('--seeds', type=int, default=None, help="种子个数")
    simulate.add_argument('--workers', type=int, default=None, help="并行进程数")
    simulate.add_argument('--balanced', action='store_true', help="使用平衡配置")
    simulate.add_argument('--detail', default=None, help="详细结果JSON路径")
    simulate.set_defaults(handler=cmd_simulate)

    temperature = commands.add_parser('temperature', parents=[common], help="温度采样权重")
    temperature.add_argument('--shares', default=None, help="数据比例 s1,s2,...")
    temperature.add_argument('--sizes', default=None, help="数据量 n1,n2,...")
    temperature.add_argument('-T', type=float, action='append', default=None, help="温度，可重复")
    temperature.set_defaults(handler=cmd_temperature)

    presets = commands.add_parser('presets', parents=[common], help="列出预设参数")
    presets.add_argument('label', nargs='?', default=None)
    presets.set_defaults(handler=cmd_presets)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    set_verbose(args.verbose)
    set_command(args.command)
    try:
        if args.config and not os.path.isfile(args.config):
            raise ConfigError(f"配置文件不存在: {args.config}")
        config = load_config(args.config)
        manifest = RunManifest.from_args(args.command, args, config, __version__)
        return args.handler(args, config, manifest)
    except DplError as e:
        debug(f"命令 {args.command} 失败: {type(e).__name__}")
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        exception(f"运行命令 {args.command} 时出现意外错误")
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_ERROR
