"""Small invocations of every CLI subcommand, shared by the CLI and acceptance tests."""

import os

from volmf.cli import cli_dispatch


def prepare_inputs(root):
    """Generate the input files the solver subcommands read; returns their directory."""
    data = os.path.join(root, "data")
    assert cli_dispatch(["gen", "--kind", "completion", "--m", "12", "--n", "16", "--rank", "3",
                         "--missing-fraction", "0.3", "--seed", "5", "--out-dir", data]) == 0
    return data


def subcommand_cases(data):
    """``(name, argv-without-out-dir)`` for every subcommand, with small budgets."""
    X = os.path.join(data, "X.csv")
    Xo = os.path.join(data, "X_observed.csv")
    H = os.path.join(data, "H.csv")
    budget = ["--outer", "5", "--inner", "3", "--trace"]
    return [
        ("gen-completion", ["gen", "--kind", "completion", "--m", "10", "--n", "12", "--rank", "2",
                            "--noise", "0.05", "--seed", "1"]),
        ("gen-separable", ["gen", "--kind", "separable", "--m", "8", "--n", "20", "--rank", "3",
                           "--noise", "0.01", "--seed", "2"]),
        ("gen-dirichlet", ["gen", "--kind", "dirichlet", "--m", "8", "--n", "20", "--rank", "3", "--seed", "3"]),
        ("gen-fixture", ["gen", "--kind", "fixture", "--name", "example1_X"]),
        ("spa", ["spa", "--input", X, "--rank", "3", "--nu", "0"]),
        ("randspa", ["spa", "--input", X, "--rank", "3", "--nu", "4", "--kappa", "1.5", "--runs", "3",
                     "--seed", "9"]),
        ("bssmf", ["bssmf", "--input", Xo, "--missing-nan", "--rank", "3", "--starts", "2"] + budget),
        ("minvol", ["minvol", "--input", X, "--rank", "3", "--warm-start-iters", "5", "--maps", "4x4"]
         + budget),
        ("minvol-complete", ["minvol-complete", "--input", Xo, "--missing-nan", "--rank", "3",
                             "--autotune", "--warm-start-iters", "5",
                             "--truth", os.path.join(data, "X_clean.csv")] + budget),
        ("maxvol", ["maxvol", "--input", X, "--rank", "3", "--lambda", "0.5"] + budget),
        ("maxvol-admm", ["maxvol", "--input", X, "--rank", "3", "--algo", "admm-bregman"] + budget),
        ("nmaxvol", ["nmaxvol", "--input", X, "--rank", "3"] + budget),
        ("ssc-check", ["ssc-check", "--input", H]),
    ]
