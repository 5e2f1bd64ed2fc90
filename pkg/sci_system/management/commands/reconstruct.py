"""
Reconstruct a spectral video from an SMES measurement
"""
import json
from pathlib import Path

from ...exceptions import ConfigError
from ...serializers import NetworkConfigSerializer, validate_or_raise
from ...sci_components.cube_store import load_measurement, load_weight_bundle, save_cube, save_weight_bundle
from ...sci_components.pgsvrt import build_pgsvrt
from ...sci_pipeline import METHODS, SCIPipeline
from ..base import (
    RunOutcome,
    SCICommand,
    add_solver_arguments,
    add_system_arguments,
    load_existing_cube,
    merged_config,
    require,
    solver_config,
    system_serializer,
)

NETWORK_OVERRIDES = {
    'seed': 'seed',
    'depth': 'depth',
    'heads': 'heads',
    'h_win': 'h_win',
    'w_win': 'w_win',
    'n_bridged': 'n_bridged',
    'variant': 'variant',
    'ordering': 'ordering',
}


class Command(SCICommand):
    help = 'Reconstruct a cube with gap-tv, back-projection or pgsvrt'

    def add_arguments(self, parser):
        parser.add_argument('--meas', help='measurement input (SMES)')
        parser.add_argument('--method', choices=METHODS, default='gap-tv')
        parser.add_argument('--out', help='reconstruction output (SCUB)')
        parser.add_argument('--gt', help='optional ground truth (SCUB) for the convergence trace')
        add_system_arguments(parser)
        add_solver_arguments(parser)

        group = parser.add_argument_group('network')
        group.add_argument('--network', help='key = value network config file')
        group.add_argument('--seed', type=int, help='weight seed')
        group.add_argument('--depth', help='blocks per level, e.g. 1,1,1')
        group.add_argument('--heads', type=int)
        group.add_argument('--h-win', type=int)
        group.add_argument('--w-win', type=int)
        group.add_argument('--n-bridged', help="bridged tokens per window, or 'none'")
        group.add_argument('--variant', help='MDFFN variant')
        group.add_argument('--ordering', help='CDPA ordering')
        group.add_argument('--weights', help='load network weights from a bundle directory')
        group.add_argument('--save-weights', help='store the network weights as a bundle directory')

    def run(self, options):
        require(options, 'meas', 'out')
        if not Path(options['meas']).exists():
            raise FileNotFoundError(f"measurement file not found: {options['meas']}")
        meas = load_measurement(options['meas'])
        serializer = system_serializer(options)
        system = serializer.build(meas.height, serializer.scene_width(meas.width_prime))
        if system.width_prime != meas.width_prime:
            raise ConfigError(f"measurement width {meas.width_prime} does not fit the system's W' = {system.width_prime}")
        ground_truth = load_existing_cube(options['gt']) if options.get('gt') else None

        method = options['method']
        pipeline = SCIPipeline(verbose=self.verbosity > 1)
        outputs = {'cube': options['out']}
        inputs = {'measurement': options['meas']}
        seed = None

        if method == 'pgsvrt':
            network_serializer = NetworkConfigSerializer(
                data=merged_config(options.get('network'), options, NETWORK_OVERRIDES)
            )
            validate_or_raise(network_serializer, 'network config')
            seed = network_serializer.validated_data.get('seed', 0)
            network = build_pgsvrt(system, meas.frames, seed=seed, **network_serializer.network_options())
            if options.get('weights'):
                network.load_weight_arrays(load_weight_bundle(options['weights']))
                inputs['weights'] = options['weights']
            result = pipeline.reconstruct(meas, system, method, network=network)
            flops_path = f"{options['out']}.flops.jsonl"
            Path(flops_path).write_text(
                ''.join(json.dumps(report.to_dict()) + '\n' for report in result.flop_reports)
            )
            outputs['flops'] = flops_path
            if options.get('save_weights'):
                save_weight_bundle(network.weight_arrays(), options['save_weights'])
                outputs['weights'] = options['save_weights']
        else:
            solver = solver_config(options) if method == 'gap-tv' else None
            result = pipeline.reconstruct(meas, system, method, solver=solver, ground_truth=ground_truth)
            if result.trace is not None:
                trace_path = f"{options['out']}.trace.csv"
                result.trace.to_csv(trace_path)
                outputs['trace'] = trace_path

        save_cube(result.cube, options['out'])
        self.say(f"🔁 {method}: {meas.shape} -> {result.cube.shape}")
        return RunOutcome(outputs=outputs, inputs=inputs, seed=seed)
