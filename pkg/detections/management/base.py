"""
Shared plumbing for the detmatch management commands.

Exit codes: 0 success, 1 usage error, 2 data validation error,
3 internal invariant violation.
"""
import json
import logging
import sys

from django.core.management.base import BaseCommand, CommandError, CommandParser

from detections.conf import toolkit
from detections.exceptions import DetmatchError, MetricInvariantError

logger = logging.getLogger(__name__)

USAGE_ERROR = 1
DATA_ERROR = 2
INVARIANT_ERROR = 3


class UsageErrorParser(CommandParser):
    def error(self, message):
        if self.called_from_command_line:
            self.print_usage(sys.stderr)
            self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")
        raise CommandError(f"Error: {message}", returncode=USAGE_ERROR)


def positive_int(text):
    value = int(text)
    if value < 1:
        raise ValueError(text)
    return value


class DetmatchCommand(BaseCommand):
    """
    Base for every toolkit subcommand. Subclasses implement `run` and may
    raise toolkit errors freely; they are mapped onto exit codes here.
    """

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.__class__ = UsageErrorParser
        parser.add_argument(
            '--strict', action='store_true', default=None,
            help='Reject unknown fields in input documents.',
        )
        parser.add_argument(
            '--lenient', dest='strict', action='store_false',
            help='Keep unknown fields in input documents instead of rejecting them.',
        )
        parser.add_argument('--seed', type=int, default=0, help='Seed for randomized subcommands.')
        parser.add_argument(
            '--threads', type=positive_int, default=None,
            help='Worker threads for parallel stages.',
        )
        return parser

    def handle(self, *args, **options):
        if options.get('strict') is None:
            options['strict'] = toolkit('STRICT_IO')
        if options.get('threads') is None:
            options['threads'] = toolkit('DEFAULT_THREADS')
        try:
            return self.run(*args, **options)
        except MetricInvariantError as exc:
            logger.error(f"{self.__module__.rsplit('.', 1)[-1]}: {exc}")
            raise CommandError(f"Invariant violation: {exc}", returncode=INVARIANT_ERROR)
        except (DetmatchError, OSError) as exc:
            raise CommandError(str(exc), returncode=DATA_ERROR)

    def run(self, *args, **options):
        raise NotImplementedError('subclasses of DetmatchCommand must provide a run() method')

    def usage_error(self, message):
        raise CommandError(message, returncode=USAGE_ERROR)

    def emit_json(self, data, path=None):
        text = json.dumps(data, indent=2, sort_keys=True, allow_nan=False)
        if path:
            with open(path, 'w', encoding='utf-8', newline='\n') as handle:
                handle.write(text + '\n')
        else:
            self.stdout.write(text)
