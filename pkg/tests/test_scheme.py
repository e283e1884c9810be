#!/usr/bin/env python3
"""
Unit tests for the group scheme module.
"""

import os
import sys
import unittest

# Add parent directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.errors import InvalidSchemeError, UnknownSchemeError, UnsupportedChannelsError
from src.scheme import (CANONICAL_SCHEME_NAMES, CORRECTION_NOTICE, LOG16_LAYER2_PRINTED, GroupFamily,
                        GroupScheme, SchemeTable, canonical_scheme_table, format_scheme_table,
                        log_group_sizes, make_scheme, parse_scheme_name, uniform_group_sizes)


class TestLogGroupSizes(unittest.TestCase):
    """Test cases for logarithmic group size arrays."""

    def test_published_arrays(self):
        """Test every published logarithmic array."""
        self.assertEqual(log_group_sizes(128, 8), [64, 32, 16, 8, 4, 2, 1, 1])
        self.assertEqual(log_group_sizes(256, 4), [128, 64, 32, 32])
        self.assertEqual(log_group_sizes(256, 2), [128, 128])
        self.assertEqual(log_group_sizes(128, 4), [64, 32, 16, 16])
        self.assertEqual(log_group_sizes(256, 8), [128, 64, 32, 16, 8, 4, 2, 2])

    def test_corrected_sixteen_group_array(self):
        """Test the 16-entry layer-2 array of Logarithmic-16."""
        sizes = log_group_sizes(128, 16)
        self.assertEqual(sizes, [32, 16, 16, 8, 8, 8, 8, 8, 4, 4, 4, 4, 4, 2, 1, 1])
        self.assertEqual(sum(sizes), 128)
        self.assertEqual(sum(s * s for s in sizes), 1942)
        self.assertEqual(len(LOG16_LAYER2_PRINTED), 15)
        self.assertEqual(sum(LOG16_LAYER2_PRINTED), 124)

    def test_single_group(self):
        """Test that one group is the full depth."""
        for channels in (1, 2, 64, 128, 256):
            self.assertEqual(log_group_sizes(channels, 1), [channels])

    def test_pure_logarithmic_form(self):
        """Test arrays outside the published tables."""
        self.assertEqual(log_group_sizes(64, 3), [32, 16, 16])
        self.assertEqual(log_group_sizes(16, 5), [8, 4, 2, 1, 1])

    def test_refinement_beyond_pure_form(self):
        """Test that large group counts split the largest group."""
        sizes = log_group_sizes(8, 6)
        self.assertEqual(len(sizes), 6)
        self.assertEqual(sum(sizes), 8)
        self.assertEqual(sizes, sorted(sizes, reverse=True))
        self.assertEqual(log_group_sizes(4, 4), [1, 1, 1, 1])

    def test_invariants_hold_for_all_counts(self):
        """Test sum, positivity and ordering for every n up to c."""
        for channels in (16, 32):
            for n in range(1, channels + 1):
                sizes = log_group_sizes(channels, n)
                self.assertEqual(len(sizes), n)
                self.assertEqual(sum(sizes), channels)
                self.assertTrue(all(s >= 1 for s in sizes))
                self.assertEqual(sizes, sorted(sizes, reverse=True))

    def test_errors(self):
        """Test invalid requests."""
        with self.assertRaises(InvalidSchemeError):
            log_group_sizes(8, 9)
        with self.assertRaises(InvalidSchemeError):
            log_group_sizes(8, 0)
        with self.assertRaises(UnsupportedChannelsError):
            log_group_sizes(96, 4)


class TestUniformGroupSizes(unittest.TestCase):
    """Test cases for uniform group size arrays."""

    def test_equal_partition(self):
        """Test equal partitions."""
        self.assertEqual(uniform_group_sizes(128, 4), [32, 32, 32, 32])
        self.assertEqual(uniform_group_sizes(256, 2), [128, 128])
        self.assertEqual(uniform_group_sizes(128, 1), [128])

    def test_non_divisible(self):
        """Test that a non-divisible count is rejected."""
        with self.assertRaises(InvalidSchemeError):
            uniform_group_sizes(128, 3)


class TestGroupScheme(unittest.TestCase):
    """Test cases for GroupScheme validation."""

    def test_rejects_bad_sum(self):
        """Test that sizes must cover the channels."""
        with self.assertRaises(InvalidSchemeError):
            GroupScheme(GroupFamily.LOGARITHMIC, 128, 3, (64, 32, 16))

    def test_rejects_increasing_sizes(self):
        """Test that sizes must be non-increasing."""
        with self.assertRaises(InvalidSchemeError):
            GroupScheme(GroupFamily.LOGARITHMIC, 8, 2, (2, 6))

    def test_rejects_unequal_uniform(self):
        """Test that uniform groups must be equal."""
        with self.assertRaises(InvalidSchemeError):
            GroupScheme(GroupFamily.UNIFORM, 8, 2, (6, 2))

    def test_make_scheme_and_dict(self):
        """Test make_scheme and serialization."""
        scheme = make_scheme(GroupFamily.LOGARITHMIC, 128, 8)
        self.assertEqual(scheme.sum_of_squares(), 5462)
        self.assertEqual(scheme.to_dict(), {
            "family": "Logarithmic",
            "channels": 128,
            "group_count": 8,
            "sizes": [64, 32, 16, 8, 4, 2, 1, 1],
        })


class TestSchemeTable(unittest.TestCase):
    """Test cases for canonical scheme tables."""

    def test_logarithmic_four(self):
        """Test the Logarithmic-4 table."""
        table = canonical_scheme_table("Logarithmic-4")
        self.assertEqual(table.per_layer[2].sizes, (64, 32, 16, 16))
        self.assertEqual(table.per_layer[3].sizes, (128, 128))
        self.assertEqual(table.family, GroupFamily.LOGARITHMIC)

    def test_uniform_eight(self):
        """Test the Uniform-8 table."""
        table = canonical_scheme_table("Uniform-8")
        self.assertEqual(table.per_layer[2].sizes, (16,) * 8)
        self.assertEqual(table.per_layer[3].sizes, (64,) * 4)

    def test_baseline(self):
        """Test the ungrouped baseline."""
        table = canonical_scheme_table("Baseline")
        self.assertEqual(table.per_layer[2].sizes, (128,))
        self.assertEqual(table.per_layer[3].sizes, (256,))
        self.assertEqual(table.family, GroupFamily.NONE)

    def test_halving_rule_for_all_grouped_schemes(self):
        """Test that layer 3 has half the groups of layer 2."""
        for name in CANONICAL_SCHEME_NAMES:
            if name == "Baseline":
                continue
            table = canonical_scheme_table(name)
            self.assertEqual(table.per_layer[3].group_count * 2, table.per_layer[2].group_count)

    def test_halving_rule_enforced(self):
        """Test that a table violating the halving rule is rejected."""
        with self.assertRaises(InvalidSchemeError):
            SchemeTable("broken", {
                2: make_scheme(GroupFamily.UNIFORM, 128, 4),
                3: make_scheme(GroupFamily.UNIFORM, 256, 4),
            })

    def test_unknown_name(self):
        """Test that unknown names raise with a readable message."""
        with self.assertRaises(UnknownSchemeError) as ctx:
            canonical_scheme_table("Logarithmic-32")
        self.assertIn("Logarithmic-32", str(ctx.exception))
        self.assertIsInstance(ctx.exception, KeyError)

    def test_parse_scheme_name(self):
        """Test name parsing."""
        self.assertEqual(parse_scheme_name("Uniform-16"), (GroupFamily.UNIFORM, 16))
        self.assertEqual(parse_scheme_name("Baseline"), (GroupFamily.NONE, 1))

    def test_format_carries_correction_notice(self):
        """Test the plain-text listing of Logarithmic-16."""
        text = format_scheme_table(canonical_scheme_table("Logarithmic-16"))
        self.assertIn("scheme: Logarithmic-16", text)
        self.assertIn("sizes=[32, 16, 16, 8, 8, 8, 8, 8, 4, 4, 4, 4, 4, 2, 1, 1]", text)
        self.assertIn(CORRECTION_NOTICE, text)

    def test_to_dict(self):
        """Test table serialization."""
        data = canonical_scheme_table("Logarithmic-8").to_dict()
        self.assertEqual(data["name"], "Logarithmic-8")
        self.assertEqual(data["layers"]["layer3"]["sizes"], [128, 64, 32, 32])
        self.assertNotIn("note", data["layers"]["layer2"])


if __name__ == '__main__':
    unittest.main()
