# %% [markdown]
# # Running experiments from a config file
#
# Each command reads a TOML file and writes deterministic CSV or JSON into the
# output directory. Existing files are left alone unless --force is given.

# %%
import pathlib
import tempfile

from eaton_lab.cli import main

tmp = pathlib.Path(tempfile.mkdtemp())
cfg = tmp / "run.toml"
cfg.write_text("seed = 1\n[risk]\nn_rep = 2000\ntheta_norms = [0.0, 4.0]\n")
print("exit", main(["moments", "--config", str(cfg), "--out", str(tmp / "out")]))
print((tmp / "out" / "moments.csv").read_text())
print("exit", main(["risk", "--config", str(cfg), "--out", str(tmp / "out")]))
print((tmp / "out" / "risk.csv").read_text())
print("again without --force, exit", main(["risk", "--config", str(cfg), "--out", str(tmp / "out")]))
