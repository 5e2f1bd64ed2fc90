"""
Report CDPA multiply-accumulate counts
"""
from ...serializers import AttentionConfigSerializer, FlopReportSerializer, validate_or_raise
from ...sci_components.flops import (
    flops_cdpa,
    flops_window_attention_reference,
    instrumented_flops_cdpa,
    reduction_verdict,
)
from ..base import RunOutcome, SCICommand, merged_config, write_json

ATTENTION_OVERRIDES = {
    'channels': 'channels',
    'frames': 'frames',
    'height': 'height',
    'width': 'width',
    'h_win': 'h_win',
    'w_win': 'w_win',
    'n_bridged': 'n_bridged',
    'heads': 'heads',
}


class Command(SCICommand):
    help = 'Closed-form and instrumented CDPA MAC counts plus the bridged-token verdict'

    def add_arguments(self, parser):
        parser.add_argument('--config', help='key = value attention config file')
        parser.add_argument('--channels', type=int)
        parser.add_argument('--frames', type=int)
        parser.add_argument('--height', type=int)
        parser.add_argument('--width', type=int)
        parser.add_argument('--h-win', type=int)
        parser.add_argument('--w-win', type=int)
        parser.add_argument('--n-bridged', help="bridged tokens per window, or 'none'")
        parser.add_argument('--heads', type=int)
        parser.add_argument('--skip-instrumented', action='store_true',
                            help='only the closed form (for token counts that cannot be pooled)')
        parser.add_argument('--out', help='report output (JSON)')

    def run(self, options):
        serializer = AttentionConfigSerializer(data=merged_config(options.get('config'), options, ATTENTION_OVERRIDES))
        validate_or_raise(serializer, 'attention config')
        config = serializer.build()

        closed = flops_cdpa(config)
        reference = flops_window_attention_reference(config)
        verdict = reduction_verdict(config)
        report = {
            'config': dict(serializer.data),
            'closed_form': FlopReportSerializer(closed.to_dict()).data,
            'reference_total_macs': reference,
            'verdict': verdict,
            'condition': f"2*N_B = {2 * config.n_bridged if config.n_bridged else None} vs h_win*w_win = {config.window_tokens}",
        }
        self.say(f"🧮 closed form: {closed.to_dict()}")
        if not options['skip_instrumented']:
            instrumented = instrumented_flops_cdpa(config)
            report['instrumented'] = FlopReportSerializer(instrumented.to_dict()).data
            report['matches_closed_form'] = instrumented == closed
            self.say(f"🧮 instrumented: {instrumented.to_dict()}")
        self.say(f"📏 reference window attention: {reference:,} MACs")
        self.say(f"⚖️ bridged tokens {verdict} the cost ({report['condition']})")

        outputs = {}
        if options.get('out'):
            write_json(options['out'], report)
            outputs['report'] = options['out']
        return RunOutcome(outputs=outputs)
