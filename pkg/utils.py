"""
General helpers for the command-line scripts: terminal colors and human-readable durations.
"""
import logging

logger = logging.getLogger(__name__)


# colors to help pass/fail verdicts stand out in the (helpful, but overwhelming) output from the
# experiment scripts. See http://stackoverflow.com/questions/287871/print-in-terminal-with-colors
class TerminalFormats:
    HEADER = '\033[95m'
    OKBLUE = '\033[94m'
    OKGREEN = '\033[92m'
    WARNING = '\033[93m'
    FAIL = '\033[91m'
    ENDC = '\033[0m'
    BOLD = '\033[1m'
    UNDERLINE = '\033[4m'


def colorize(text, terminal_format):
    """Wraps text in a TerminalFormats code, resetting the terminal afterward."""
    return '%(format)s%(text)s%(end)s' % {
        'format': terminal_format,
        'text': text,
        'end': TerminalFormats.ENDC,
    }


_SECONDS_PER_MINUTE = 60
_SECONDS_PER_HOUR = 3600
_HOURS_PER_DAY = 24
_SECONDS_PER_DAY = _SECONDS_PER_HOUR * _HOURS_PER_DAY
_SECONDS_PER_MONTH = _SECONDS_PER_DAY * 30
# NOTE: this causes years to have 360 days, but it's consistent / good enough
_SECONDS_PER_YEAR = _SECONDS_PER_MONTH * 12

# units larger than a minute, largest first
_LARGE_UNITS = (
    ('year', _SECONDS_PER_YEAR),
    ('month', _SECONDS_PER_MONTH),
    ('day', _SECONDS_PER_DAY),
    ('hour', _SECONDS_PER_HOUR),
)

# runs shorter than this many minutes still show fractional seconds
_FRACTIONAL_SECONDS_MINUTES = 10


def to_human_relevant_delta(seconds):
    """
    Converts a duration to a human-readable string showing only the units that apply, with
    precision limited to what's likely to interest a person given the largest unit present. Used
    for experiment wall-clock times in logs and suite summaries.

    Months are 30 days and years 360 days. Durations under a second are shown in milliseconds;
    fractional seconds are only shown for durations under ten minutes.

    :param seconds: time in seconds
    :return: e.g. '250 ms', '3.25 s', '2 minutes 5 s', '1 day 3 hours 12 minutes 40 s'
    """
    parts = []

    def _add(quantity, unit):
        parts.append('%d %s%s' % (quantity, unit, 's' if quantity > 1 else ''))

    for unit, unit_seconds in _LARGE_UNITS:
        if seconds >= unit_seconds:
            _add(seconds // unit_seconds, unit)
            seconds %= unit_seconds
    larger_than_minutes = bool(parts)

    minutes = 0
    if seconds >= _SECONDS_PER_MINUTE:
        minutes = seconds // _SECONDS_PER_MINUTE
        seconds %= _SECONDS_PER_MINUTE
        _add(minutes, 'minute')

    if seconds > 0 or not parts:
        if seconds < 1 and not parts:
            parts.append('%d ms' % round(seconds * 1000))
        elif not larger_than_minutes and minutes < _FRACTIONAL_SECONDS_MINUTES:
            parts.append('%.2f s' % seconds)
        else:
            parts.append('%d s' % round(seconds))

    return ' '.join(parts)
