#!/usr/bin/env python3
"""
Tests for the command line entry point.

This script runs the gen-data, train, inspect, ablate and gradcheck commands
end to end on a tiny configuration and checks the exit codes.
"""

import os
import sys
import json
import shutil
import tempfile
import unittest

import pandas as pd

# Add the parent directory to the path so we can import from vchgcl
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from vchgcl.analytics.gradcheck_suite import tiny_setup
from vchgcl.core.errors import EXIT_CONTRACT, EXIT_OK
from vchgcl.main import main


class TestCommandLine(unittest.TestCase):
    """Test cases for vchgcl.main."""

    @classmethod
    def setUpClass(cls):
        cls.temp_dir = tempfile.mkdtemp()
        config, spec = tiny_setup()
        spec = spec.model_copy(update={"n_train": 6, "n_eval": 3})
        cls.config_path = cls.write("config.json", config.model_dump_json(by_alias=True))
        cls.spec_path = cls.write("spec.json", spec.model_dump_json())
        cls.data_dir = os.path.join(cls.temp_dir, "data")
        cls.run_dir = os.path.join(cls.temp_dir, "run")

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.temp_dir)

    @classmethod
    def write(cls, name, text):
        path = os.path.join(cls.temp_dir, name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

    def test_gen_train_inspect(self):
        self.assertEqual(main(["gen-data", "--spec", self.spec_path, "--out", self.data_dir]), EXIT_OK)
        self.assertTrue(os.path.exists(os.path.join(self.data_dir, "train.npz")))

        code = main(["train", "--config", self.config_path, "--data", self.data_dir, "--epochs", "1",
                     "--out", self.run_dir])
        self.assertEqual(code, EXIT_OK)
        metrics = pd.read_csv(os.path.join(self.run_dir, "metrics.csv"))
        self.assertEqual(list(metrics["epoch"]), [0, 1])
        checkpoint = os.path.join(self.run_dir, "model.vchg")
        self.assertTrue(os.path.exists(checkpoint))
        self.assertTrue(os.path.exists(checkpoint + ".json"))
        self.assertTrue(os.path.exists(os.path.join(self.run_dir, "training_curves.png")))

        out = os.path.join(self.run_dir, "attention.json")
        code = main(["inspect", "--checkpoint", checkpoint, "--instance", "1", "--data", self.data_dir,
                     "--out", out])
        self.assertEqual(code, EXIT_OK)
        with open(out, "r", encoding="utf-8") as f:
            self.assertEqual(json.load(f)["ablation"], "grn_contrastive")
        self.assertTrue(os.path.exists(os.path.join(self.run_dir, "attention_edges.png")))

        code = main(["inspect", "--checkpoint", checkpoint, "--instance", "3", "--data", self.data_dir,
                     "--out", out])
        self.assertEqual(code, EXIT_CONTRACT)

    def test_ablate(self):
        out = os.path.join(self.temp_dir, "ablation")
        code = main(["ablate", "--spec", self.spec_path, "--config", self.config_path, "--epochs", "1",
                     "--seeds", "0", "--out", out])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(len(pd.read_csv(os.path.join(out, "ablation.csv"))), 4)
        self.assertEqual(len(pd.read_csv(os.path.join(out, "summary.csv"))), 4)
        self.assertTrue(os.path.exists(os.path.join(out, "ablation.png")))

    def test_ablate_is_reproducible(self):
        outputs = []
        for name in ("ablation_first", "ablation_second"):
            out = os.path.join(self.temp_dir, name)
            code = main(["ablate", "--spec", self.spec_path, "--config", self.config_path, "--epochs", "1",
                         "--seeds", "0", "1", "--out", out])
            self.assertEqual(code, EXIT_OK)
            with open(os.path.join(out, "ablation.csv"), "rb") as f:
                outputs.append(f.read())
        self.assertEqual(outputs[0], outputs[1])

    def test_extended_ablate(self):
        out = os.path.join(self.temp_dir, "ablation_extended")
        code = main(["ablate", "--spec", self.spec_path, "--config", self.config_path, "--epochs", "0",
                     "--seeds", "0", "--extended", "--out", out])
        self.assertEqual(code, EXIT_OK)
        rows = pd.read_csv(os.path.join(out, "ablation.csv"))
        self.assertEqual(list(rows["ablation"])[-2:], ["text_only", "commonsense_only"])

    def test_gradcheck(self):
        self.assertEqual(main(["gradcheck"]), EXIT_OK)

    def test_full_gradcheck(self):
        self.assertEqual(main(["gradcheck", "--full"]), EXIT_OK)

    def test_invalid_config(self):
        path = self.write("bad_config.json", json.dumps({"d_o": -1}))
        code = main(["train", "--config", path, "--data", self.data_dir, "--out", self.run_dir])
        self.assertEqual(code, EXIT_CONTRACT)

    def test_invalid_spec(self):
        path = self.write("bad_spec.json", json.dumps({"C": 6, "signal_dim": [0, 4]}))
        self.assertEqual(main(["gen-data", "--spec", path, "--out", self.data_dir]), EXIT_CONTRACT)

    def test_missing_files(self):
        missing = os.path.join(self.temp_dir, "missing.json")
        self.assertEqual(main(["gen-data", "--spec", missing, "--out", self.data_dir]), EXIT_CONTRACT)
        self.assertEqual(main(["inspect", "--checkpoint", missing, "--instance", "0", "--out", missing]),
                         EXIT_CONTRACT)


if __name__ == "__main__":
    unittest.main()
