import json
import time

import pytest

from ontoembed import cli
from ontoembed.grounding import PredicateNet


def run(*argv):
    return cli.main([str(a) for a in argv])


def pretrain_args(data, out, *extra):
    return ("pretrain", "--diagnosis", data / "diagnosis.tsv", "--procedure", data / "procedure.tsv",
            "--medication", data / "medication.tsv", "--indications", data / "indications.tsv",
            "--out", out, "--dim", 8, "--epochs", 3, "--batch", 16, *extra)


def eval_args(data, emb, out, *extra):
    return ("eval", "--embeddings", emb, "--ehr", data / "ehr.txt", "--ddi", data / "ddi.tsv",
            "--out", out, "--finetune-epochs", 20, "--bootstrap-rounds", 3, *extra)


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data"
    assert run("gen-data", "--out", out, "--patients", 200) == 0
    return out


@pytest.fixture(scope="module")
def pretrained(data):
    out = data.parent / "run"
    assert run(*pretrain_args(data, out)) == 0
    return out


class TestPipeline:
    def test_gen_data_files(self, data):
        names = {"diagnosis.tsv", "procedure.tsv", "medication.tsv", "indications.tsv", "ddi.tsv",
                 "ehr.txt", "ehr.txt.manifest.json", "manifest.json"}
        assert names <= {p.name for p in data.iterdir()}

    def test_pretrain_outputs(self, pretrained):
        for name in ("checkpoint.bin", "embeddings.tsv", "epoch_log.jsonl", "manifest.json"):
            assert (pretrained / name).exists()
        logs = [json.loads(line) for line in (pretrained / "epoch_log.jsonl").read_text().splitlines()]
        assert [e["epoch"] for e in logs] == [1, 2, 3]
        assert all(0 <= v <= 1 for e in logs for v in e["sat"].values())

    def test_eval_report(self, data, pretrained, tmp_path, capsys):
        out = tmp_path / "report.tsv"
        assert run(*eval_args(data, pretrained / "embeddings.tsv", out)) == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "model\tinit\tjaccard\tf1\tddi\tavg_drugs"
        assert [tuple(l.split("\t")[:2]) for l in lines[1:]] == [
            ("reference[full]", "random"), ("reference[few-shot]", "random"),
            ("reference[full]", "pretrained"), ("reference[few-shot]", "pretrained")]
        assert "few-shot admissions" in capsys.readouterr().out

    def test_export_matches_pretrain(self, pretrained, tmp_path):
        out = tmp_path / "emb.tsv"
        assert run("export", "--checkpoint", pretrained / "checkpoint.bin", "--out", out) == 0
        assert out.read_bytes() == (pretrained / "embeddings.tsv").read_bytes()

    def test_align_from_checkpoint(self, data, pretrained, tmp_path):
        out = tmp_path / "aligned"
        assert run("align", "--checkpoint", pretrained / "checkpoint.bin", "--diagnosis",
                   data / "diagnosis.tsv", "--indications", data / "indications.tsv", "--out", out,
                   "--epochs", 2) == 0
        assert (out / "embeddings.tsv").exists()

    def test_deterministic(self, data, tmp_path):
        for tag in ("a", "b"):
            assert run(*pretrain_args(data, tmp_path / tag)) == 0
            assert run(*eval_args(data, tmp_path / tag / "embeddings.tsv", tmp_path / f"{tag}.tsv")) == 0
        for name in ("embeddings.tsv", "checkpoint.bin", "epoch_log.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()


class TestExitCodes:
    def test_missing_path(self, data, tmp_path, capsys):
        missing = tmp_path / "nowhere.tsv"
        code = run("pretrain", "--diagnosis", missing, "--procedure", data / "procedure.tsv",
                   "--medication", data / "medication.tsv", "--out", tmp_path / "o")
        assert code == 2
        assert str(missing) in capsys.readouterr().err

    def test_zero_epochs(self, data, tmp_path):
        assert run(*pretrain_args(data, tmp_path / "o", "--epochs", 0)) == 1

    def test_bad_flag_and_command(self):
        assert run("pretrain", "--bogus") == 1
        assert run("nonsense") == 1

    def test_bad_tail(self, data, pretrained, tmp_path):
        assert run(*eval_args(data, pretrained / "embeddings.tsv", tmp_path / "r.tsv",
                              "--tail-percentage", 0)) == 1
        assert run(*eval_args(data, pretrained / "embeddings.tsv", tmp_path / "r.tsv",
                              "--tail-percentage", 150)) == 1

    def test_vocabulary_mismatch(self, data, pretrained, tmp_path, capsys):
        lines = (pretrained / "embeddings.tsv").read_text(encoding="utf-8").splitlines(keepends=True)
        dropped = next(l for l in lines if l.startswith("medication\tM1.1.2\t"))
        emb = tmp_path / "emb.tsv"
        emb.write_text("".join(l for l in lines if l is not dropped), encoding="utf-8")
        assert run(*eval_args(data, emb, tmp_path / "r.tsv")) == 2
        assert "M1.1.2" in capsys.readouterr().err

    def test_malformed_ontology(self, data, tmp_path, capsys):
        bad = tmp_path / "d.tsv"
        bad.write_text("a\tb\nb\ta\n", encoding="utf-8")
        code = run("pretrain", "--diagnosis", bad, "--procedure", data / "procedure.tsv",
                   "--medication", data / "medication.tsv", "--out", tmp_path / "o")
        assert code == 2 and "data error" in capsys.readouterr().err

    def test_main_returns_code(self):
        assert isinstance(cli.main(["check", "--suite", "metrics"]), int)


class TestConfig:
    def manifest(self, out):
        return json.loads((out / "ehr.txt.manifest.json").read_text())

    def test_precedence(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"patients": 30, "zipf": 0.5}))
        assert run("gen-data", "--out", tmp_path / "a", "--config", cfg, "--patients", 20) == 0
        m = self.manifest(tmp_path / "a")
        assert (m["n_patients"], m["zipf_s"]) == (20, 0.5)
        assert run("gen-data", "--out", tmp_path / "b", "--config", cfg) == 0
        assert self.manifest(tmp_path / "b")["n_patients"] == 30
        assert run("gen-data", "--out", tmp_path / "c") == 0
        m = self.manifest(tmp_path / "c")
        assert (m["n_patients"], m["zipf_s"]) == (1000, 1.1)

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"patiens": 30}))
        assert run("gen-data", "--out", tmp_path / "a", "--config", cfg) == 1
        assert "patiens" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{")
        assert run("gen-data", "--out", tmp_path / "a", "--config", cfg) == 1

    def test_tail_percentage_changes_few_shot(self, data, pretrained, tmp_path, capsys):
        counts = {}
        for tail in (30, 20):
            capsys.readouterr()
            assert run(*eval_args(data, pretrained / "embeddings.tsv", tmp_path / f"{tail}.tsv",
                                  "--tail-percentage", tail)) == 0
            line = next(l for l in capsys.readouterr().out.splitlines() if l.startswith("few-shot"))
            assert f"tail {tail}%" in line
            counts[tail] = line
        assert counts[30] != counts[20]


class TestCheckAndVerify:
    def test_check_passes_quickly(self, capsys):
        start = time.perf_counter()
        assert run("check") == 0
        assert time.perf_counter() - start < 120
        out = capsys.readouterr().out
        for name in ("grad_check", "closure", "locality", "crisp", "metrics"):
            assert f"PASS {name}" in out

    def test_injected_gradient_bug_is_caught(self, monkeypatch, capsys):
        original = PredicateNet.backward

        def wrong(self, cache, upstream):
            grads, dx, dy = original(self, cache, upstream)
            return grads, dx * 1.01, dy

        monkeypatch.setattr(PredicateNet, "backward", wrong)
        assert run("check", "--suite", "grad_check") == 4
        out = capsys.readouterr().out
        assert "FAIL grad_check" in out

    def test_unknown_suite(self):
        assert run("check", "--suite", "nope") == 1

    def test_verify(self, data, tmp_path, capsys):
        victim = tmp_path / "indications.tsv"
        victim.write_bytes((data / "indications.tsv").read_bytes())
        out = tmp_path / "run"
        assert run(*pretrain_args(data, out, "--epochs", 1, "--indications", victim)) == 0
        assert run("verify", out / "manifest.json") == 0
        capsys.readouterr()
        victim.write_text(victim.read_text() + "M1.1.1\tD1\n")
        assert run("verify", out / "manifest.json") == 2
        assert str(victim) in capsys.readouterr().out
