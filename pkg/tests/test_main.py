#!/usr/bin/env python3
"""
Unit tests for the command-line interface.
"""

import csv
import io
import os
import sys
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from unittest.mock import patch

import pytest
import yaml

# Add parent directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.gradcheck import GradcheckReport, CheckResult
from src.main import _run_config, build_parser, main


def run(argv):
    """Run main() and capture (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


class TestPlan(unittest.TestCase):
    """Test cases for the plan command."""

    def test_canonical_scheme(self):
        """Test listing a canonical scheme."""
        code, out, _ = run(["plan", "Logarithmic-8"])
        self.assertEqual(code, 0)
        self.assertIn("scheme: Logarithmic-8", out)
        self.assertIn("layer2: channels=128 groups=8", out)
        self.assertIn("layer3: channels=256 groups=4", out)

    def test_explicit_grouping(self):
        """Test --channels and --groups."""
        code, out, _ = run(["plan", "--channels", "128", "--groups", "1"])
        self.assertEqual(code, 0)
        self.assertIn("sizes=[128]", out)
        code, out, _ = run(["plan", "--family", "uniform", "--channels", "64", "--groups", "4"])
        self.assertIn("sizes=[16, 16, 16, 16]", out)

    def test_unknown_scheme(self):
        """Test that an unknown scheme is an error with exit code 1."""
        code, _, err = run(["plan", "Logarithmic-32"])
        self.assertEqual(code, 1)
        self.assertIn("Error:", err)

    def test_usage_errors(self):
        """Test that missing or conflicting arguments exit with code 2."""
        self.assertEqual(run(["plan"])[0], 2)
        self.assertEqual(run(["plan", "Uniform-4", "--channels", "64"])[0], 2)

    def test_yaml_and_diagram(self):
        """Test the YAML and Mermaid outputs."""
        with tempfile.TemporaryDirectory() as tmp:
            out_path = os.path.join(tmp, "plan.yaml")
            diagram = os.path.join(tmp, "net.mmd")
            code, _, _ = run(["plan", "Uniform-4", "--out", out_path, "--diagram", diagram])
            self.assertEqual(code, 0)
            with open(out_path) as f:
                self.assertEqual(yaml.safe_load(f)["name"], "Uniform-4")
            self.assertTrue(os.path.isfile(diagram))


class TestCountAndTables(unittest.TestCase):
    """Test cases for count-params and reproduce-tables."""

    def test_count_single(self):
        """Test the per-layer table of one scheme."""
        code, out, _ = run(["count-params", "--scheme", "Uniform-16"])
        self.assertEqual(code, 0)
        self.assertIn("103,616", out)

    def test_count_yaml(self):
        """Test the YAML budget file."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "budget.yaml")
            code, _, _ = run(["count-params", "--scheme", "Logarithmic-8", "--classes", "6", "--out", path])
            self.assertEqual(code, 0)
            with open(path) as f:
                document = yaml.safe_load(f)
        self.assertEqual(document["classes"], 6)
        self.assertEqual(document["schemes"][0]["total"], 215236)

    def test_reproduce_tables(self):
        """Test that the computed totals match the published ones."""
        for classes in ("10", "6"):
            code, out, _ = run(["reproduce-tables", "--classes", classes])
            self.assertEqual(code, 0)
            self.assertIn("MATCH", out)
            self.assertNotIn("MISMATCH", out)

    def test_reproduce_tables_markdown(self):
        """Test the Markdown rendering."""
        code, out, _ = run(["reproduce-tables", "--format", "markdown", "--with-accuracy"])
        self.assertEqual(code, 0)
        self.assertIn("|", out)


class TestGradcheckAndParser(unittest.TestCase):
    """Test cases for gradcheck exit codes and argument parsing."""

    @patch("src.main.run_gradcheck")
    def test_gradcheck_exit_codes(self, mock_run):
        """Test that a failing check exits with code 1."""
        mock_run.return_value = GradcheckReport([CheckResult("relu", 0.09, 20, False)])
        code, out, _ = run(["gradcheck", "--corrupt", "relu"])
        self.assertEqual(code, 1)
        self.assertIn("FAILED: relu", out)
        mock_run.assert_called_once_with(seed=0, corrupt="relu", include_network=True)

        mock_run.return_value = GradcheckReport([CheckResult("relu", 1e-9, 20, True)])
        self.assertEqual(run(["gradcheck", "--skip-network"])[0], 0)

    def test_unknown_flag(self):
        """Test that argparse rejects unknown flags with exit code 2."""
        with redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as ctx:
                main(["count-params", "--bogus"])
        self.assertEqual(ctx.exception.code, 2)

    def test_no_shortcut_flag(self):
        """Test the shortcut flag default and override."""
        parser = build_parser()
        self.assertIsNone(parser.parse_args(["count-params"]).shortcut)
        self.assertFalse(parser.parse_args(["count-params", "--no-shortcut"]).shortcut)


class TestTrainAndEval(unittest.TestCase):
    """Test cases for train, eval and their shared run configuration."""

    def setUp(self):
        """Set up test fixtures."""
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        """Remove temporary files."""
        self.tmp.cleanup()

    def test_fer_epochs_default_and_explicit(self):
        """Test that fer shortens only an unspecified epoch count."""
        parser = build_parser()
        self.assertEqual(_run_config(parser.parse_args(["train", "--lr-schedule", "fer"]))["epochs"], 30)
        self.assertEqual(_run_config(parser.parse_args(["train", "--lr-schedule", "fer", "--epochs", "12"]))["epochs"], 12)
        path = os.path.join(self.tmp.name, "run.yaml")
        with open(path, "w") as f:
            f.write("lr-schedule: fer\nepochs: 180\n")
        self.assertEqual(_run_config(parser.parse_args(["train", "--config", path]))["epochs"], 180)

    def test_explicit_overlong_fer_run_is_rejected(self):
        """Test that --epochs 180 with the 30-epoch schedule is an error."""
        code, _, err = run(["train", "--dataset", "synthetic", "--lr-schedule", "fer", "--epochs", "180"])
        self.assertEqual(code, 1)
        self.assertIn("Error:", err)

    @pytest.mark.slow
    def test_eval_reproduces_training_accuracy(self):
        """Test that eval on a limited-run checkpoint matches the last history entry."""
        checkpoint = os.path.join(self.tmp.name, "u16.lgcv")
        history = os.path.join(self.tmp.name, "history.csv")
        code, out, _ = run(["train", "--dataset", "synthetic", "--scheme", "Uniform-16", "--limit", "30",
                            "--epochs", "1", "--lr-schedule", "const:0.001", "--quiet",
                            "--checkpoint", checkpoint, "--out", history])
        self.assertEqual(code, 0)
        self.assertTrue(os.path.isfile(os.path.join(self.tmp.name, "u16.norm.yaml")))
        with open(history) as f:
            final_acc = float(list(csv.DictReader(f))[-1]["test_acc"])

        code, out, _ = run(["eval", "--dataset", "synthetic", "--scheme", "Uniform-16", "--batch-size", "256",
                            "--checkpoint", checkpoint])
        self.assertEqual(code, 0)
        self.assertIn(f"top-1 accuracy: {final_acc:.2f}%", out)


if __name__ == '__main__':
    unittest.main()
