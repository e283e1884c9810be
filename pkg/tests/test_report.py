#!/usr/bin/env python3
"""
Unit tests for the report module.
"""

import os
import sys
import tempfile
import unittest

# Add parent directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.errors import ReportError
from src.model import NetworkSpec
from src.report import (BASELINE_DELTA, FLAG_DELTA, FLAG_MATCH, published_specs, reproduce_tables,
                        scheme_comparison_report)
from src.scheme import CANONICAL_SCHEME_NAMES


class TestSchemeComparisonReport(unittest.TestCase):
    """Test cases for scheme comparison reports."""

    def setUp(self):
        """Set up test fixtures."""
        self.specs = [NetworkSpec.from_name(name) for name in CANONICAL_SCHEME_NAMES]

    def test_params_only(self):
        """Test the totals column over all canonical schemes."""
        report = scheme_comparison_report(self.specs)
        totals = [row.total for row in report.rows]
        self.assertEqual(totals, [269504, 158912, 103616, 278720, 216260, 191060, 539840])
        self.assertTrue(all(row.accuracy is None and row.drop is None for row in report.rows))

    def test_accuracy_drop(self):
        """Test drop = baseline - accuracy."""
        specs = [NetworkSpec.from_name("Logarithmic-8"), NetworkSpec.from_name("Baseline")]
        report = scheme_comparison_report(specs, {"Baseline": 87.06, "Logarithmic-8": 85.79})
        self.assertAlmostEqual(report.row("Logarithmic-8").drop, 1.27, places=6)
        self.assertIsNone(report.row("Baseline").drop)

    def test_single_spec(self):
        """Test a single params-only row."""
        report = scheme_comparison_report([NetworkSpec.from_name("Uniform-4")])
        self.assertEqual(len(report.rows), 1)
        self.assertEqual(report.rows[0].total, 269504)

    def test_missing_baseline(self):
        """Test that drops require a baseline accuracy."""
        with self.assertRaises(ReportError):
            scheme_comparison_report([NetworkSpec.from_name("Uniform-4")], {"Uniform-4": 85.0})

    def test_mixed_classes(self):
        """Test that class counts cannot be mixed."""
        with self.assertRaises(ReportError):
            scheme_comparison_report([NetworkSpec.from_name("Uniform-4", num_classes=6),
                                      NetworkSpec.from_name("Uniform-4", num_classes=10)])

    def test_formats(self):
        """Test every rendering."""
        report = scheme_comparison_report(self.specs)
        text = report.render("table")
        self.assertIn("269,504", text)
        csv_text = report.render("csv")
        self.assertTrue(csv_text.startswith("Scheme,Total Parameters\n"))
        self.assertIn("Logarithmic-8,216260", csv_text)
        self.assertIn("| Logarithmic-16 | 191,060 |", report.render("markdown"))
        html = report.render("html")
        self.assertIn("<table>", html)
        self.assertIn("<td>Baseline</td>", html)
        with self.assertRaises(ReportError):
            report.render("pdf")

    def test_write(self):
        """Test writing a report file."""
        report = scheme_comparison_report(self.specs)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "out", "report.md")
            report.write(path, "markdown")
            with open(path) as f:
                self.assertIn("Scheme comparison", f.read())


class TestReproduceTables(unittest.TestCase):
    """Test cases for the published-table comparison."""

    def test_ten_classes(self):
        """Test that every grouped row matches at 10 classes."""
        report = reproduce_tables(10)
        grouped = [row for row in report.rows if not row.is_baseline]
        self.assertEqual(len(grouped), 9)
        self.assertTrue(all(row.flag == FLAG_MATCH for row in grouped))
        self.assertEqual(sorted({row.total for row in grouped}),
                         [103616, 158912, 191060, 216260, 269504, 278720])
        self.assertTrue(report.all_match)

    def test_six_classes(self):
        """Test that every grouped row matches at 6 classes."""
        report = reproduce_tables(6)
        grouped = [row for row in report.rows if not row.is_baseline]
        self.assertTrue(all(row.flag == FLAG_MATCH for row in grouped))
        self.assertEqual(sorted({row.total for row in grouped}),
                         [102592, 157888, 190036, 215236, 268480, 277696])

    def test_baseline_delta(self):
        """Test the documented baseline delta."""
        for classes, computed in ((10, 539840), (6, 538816)):
            baseline = reproduce_tables(classes).row("No filter grouping (baseline)")
            self.assertEqual(baseline.total, computed)
            self.assertEqual(baseline.published_total - baseline.total, BASELINE_DELTA)
            self.assertEqual(baseline.flag, FLAG_DELTA)

    def test_without_shortcut_rows(self):
        """Test that the w/o shortcut rows are present."""
        report = reproduce_tables(10)
        self.assertEqual(report.row("Uniform-8 w/o shortcut").total, report.row("Uniform-8").total)

    def test_with_accuracy(self):
        """Test the published accuracy columns."""
        report = reproduce_tables(10, with_accuracy=True)
        row = report.row("Logarithmic-8")
        self.assertEqual(row.published_accuracy, 85.79)
        self.assertAlmostEqual(row.published_drop, 1.27, places=6)
        self.assertIn("Published Accuracy (%)", report.render("table"))

    def test_unknown_class_count(self):
        """Test that only 6 and 10 classes have published tables."""
        with self.assertRaises(ReportError):
            reproduce_tables(7)

    def test_published_specs_order(self):
        """Test that specs follow the published row order."""
        names = [spec.name for spec in published_specs(6)]
        self.assertEqual(names[0], "Uniform-4 w/o shortcut")
        self.assertEqual(names[-1], "Baseline w/o shortcut")


if __name__ == '__main__':
    unittest.main()
