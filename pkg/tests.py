# -*- coding: utf-8 -*-

from unittest import TestCase

from utils import TerminalFormats, colorize, to_human_relevant_delta


class HumanRelevantDeltaTests(TestCase):
    def test_sub_second(self):
        self.assertEqual('0 ms', to_human_relevant_delta(0))
        self.assertEqual('250 ms', to_human_relevant_delta(0.25))

    def test_fractional_seconds(self):
        self.assertEqual('3.25 s', to_human_relevant_delta(3.25))
        self.assertEqual('2 minutes 5.50 s', to_human_relevant_delta(125.5))

    def test_rounded_seconds_for_long_runs(self):
        self.assertEqual('12 minutes 5 s', to_human_relevant_delta(725.2))
        self.assertEqual('1 hour 1 minute 1 s', to_human_relevant_delta(3661))

    def test_whole_units(self):
        self.assertEqual('1 minute', to_human_relevant_delta(60))
        self.assertEqual('2 days', to_human_relevant_delta(2 * 24 * 3600))
        self.assertEqual('1 year 1 month', to_human_relevant_delta(390 * 24 * 3600))


class ColorizeTests(TestCase):
    def test_wraps_and_resets(self):
        text = colorize('PASS', TerminalFormats.OKGREEN)
        self.assertTrue(text.startswith(TerminalFormats.OKGREEN))
        self.assertTrue(text.endswith(TerminalFormats.ENDC))
        self.assertIn('PASS', text)
