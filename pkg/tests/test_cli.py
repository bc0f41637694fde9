import json

import pytest

from replay_td.cli import main
from replay_td.mdp import save_json

from .conftest import chain_mdp, uniform_two_state


@pytest.fixture
def uniform_files(tmp_path):
    mdp, pol = uniform_two_state()
    save_json(mdp.to_dict(), tmp_path / "mdp.json")
    save_json(pol.to_dict(), tmp_path / "policy.json")
    return tmp_path / "mdp.json", tmp_path / "policy.json"


ANALYZE_KEYS = {"n_states", "n_actions", "gamma", "alpha", "mu", "mu_min", "v_pi", "a_inf_norm", "contraction",
                "lyapunov_residual", "lyapunov_terms", "m_norm", "m_norm_bound", "t1_mix", "t2_mix", "n_pairs",
                "pair_chain_irreducible", "pair_chain_aperiodic"}


class TestAnalyze:
    def test_uniform_chain(self, uniform_files, capsys):
        m, p = uniform_files
        assert main(["analyze", "--mdp", str(m), "--policy", str(p), "--alpha", "0.1", "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert set(doc) == ANALYZE_KEYS
        assert doc["t1_mix"] == 1
        assert doc["a_inf_norm"] == pytest.approx(0.975, abs=1e-15)
        assert doc["m_norm"] <= doc["m_norm_bound"]

    def test_text_mode(self, uniform_files, capsys):
        m, p = uniform_files
        assert main(["analyze", "--mdp", str(m), "--policy", str(p)]) == 0
        assert "t1_mix: 1" in capsys.readouterr().out

    def test_non_ergodic_exit_code(self, tmp_path, capsys):
        mdp, pol = chain_mdp([[0, 1], [1, 0]])
        save_json(mdp.to_dict(), tmp_path / "per.json")
        assert main(["analyze", "--mdp", str(tmp_path / "per.json")]) == 2
        assert "ChainNotErgodic" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["analyze", "--mdp", str(tmp_path / "nope.json")]) == 2


class TestRunAndGenerate:
    def test_gen_then_run(self, tmp_path, capsys):
        assert main(["gen-mdp", "--seed", "4", "--n-states", "4", "--out", str(tmp_path / "g")]) == 0
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"buffer_size": 16, "batch_size": 4, "horizon": 50}))
        capsys.readouterr()
        rc = main(["run", "--mdp", str(tmp_path / "g" / "mdp.json"), "--policy", str(tmp_path / "g" / "policy.json"),
                   "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / "r"), "--json"])
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["horizon"] == 50
        assert (tmp_path / "r" / "trace.csv").exists()
        side = json.loads((tmp_path / "r" / "trace.json").read_text())
        assert side["seed"] == 3

    def test_bad_run_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"alpha": 2.0}))
        assert main(["run", "--config", str(cfg)]) == 2
        cfg.write_text(json.dumps({"buffer": 3}))
        assert main(["run", "--config", str(cfg)]) == 2


class TestSweep:
    def test_sweep_exit_codes(self, tmp_path):
        spec = {"generator": {"seed": 1}, "alpha": [0.1], "buffer_size": [32], "batch_size": [4],
                "horizon": [100], "seeds": {"count": 2, "master": 1}}
        (tmp_path / "s.json").write_text(json.dumps(spec))
        assert main(["sweep", "--config", str(tmp_path / "s.json"), "--out", str(tmp_path / "o")]) == 0
        spec["batch_size"] = []
        (tmp_path / "s.json").write_text(json.dumps(spec))
        assert main(["sweep", "--config", str(tmp_path / "s.json"), "--out", str(tmp_path / "o2")]) == 2
        assert not (tmp_path / "o2").exists()


class TestVerify:
    def test_quick_on_two_state_fixture(self, tmp_path, capsys):
        assert main(["verify", "--level", "quick", "--fixture", "two_state", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 12
        reports = json.loads((tmp_path / "verify.json").read_text())
        assert len(reports) == 12
