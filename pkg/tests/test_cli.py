import numpy as np
import pytest

from conplan import configfile
from conplan.cli import main
from conplan.constraints import SystemSpec
from conplan.dataset import load_dataset

from conftest import make_chain

TEST_CONFIG = """
[dataset]
n_poses = 12
ik_cap_per_pose = 4
ik_restarts_per_chain = 12

[pseudolabels]
scales = 5:0.1,10:0.2

[clusterer]
min_cluster_size = 8
min_samples = 4

[embedder]
n_epochs = 80

[encoder]
epochs = 5
batch_size = 32
lr = 0.001
hidden_dim = 16
feature_dim = 8
projector_dim = 4

[bench]
n_scenes = 2
n_obstacles = 2
time_limit = 0.5
ik_candidates = 4
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    sys_spec = SystemSpec(chains=(make_chain([1.0, 1.0, 1.0], limit=2.8),))
    configfile.write_system(sys_spec, root / "system.cfg")
    (root / "conplan.cfg").write_text(TEST_CONFIG)
    return root


def run(args):
    return main([str(a) for a in args])


class TestPrintConfig:
    def test_dumps_defaults(self, capsys):
        assert main(["--print-config"]) == 0
        out = capsys.readouterr().out
        assert "[planner]" in out
        assert "step_size = 0.1" in out

    def test_roundtrip_parseable(self, tmp_path, capsys):
        main(["--print-config"])
        text = capsys.readouterr().out
        (tmp_path / "dump.cfg").write_text(text)
        cfg = configfile.load_config(tmp_path / "dump.cfg")
        assert cfg == configfile.default_config()


class TestUsageErrors:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 1

    def test_missing_required_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["generate", "--out", "/tmp/x"])
        assert exc.value.code == 1

    def test_runtime_failure_exit_2(self, workdir, capsys):
        code = run(["generate", "--system", workdir / "missing.cfg",
                    "--out", workdir / "na"])
        assert code == 2
        assert "conplan generate" in capsys.readouterr().err


class TestPipeline:
    def test_generate(self, workdir, capsys):
        code = run(["generate", "--system", workdir / "system.cfg",
                    "--config", workdir / "conplan.cfg", "--out", workdir])
        assert code == 0
        ds = load_dataset(workdir / "dataset.txt")
        assert len(ds.records) >= 12

    def test_labels(self, workdir, capsys):
        code = run(["labels", "--dataset", workdir / "dataset.txt",
                    "--config", workdir / "conplan.cfg", "--out", workdir])
        assert code == 0
        assert (workdir / "labels.txt").exists()

    def test_train(self, workdir, capsys):
        code = run(["train", "--dataset", workdir / "dataset.txt",
                    "--labels", workdir / "labels.txt",
                    "--config", workdir / "conplan.cfg", "--out", workdir])
        assert code == 0
        assert (workdir / "model.bin").exists()
        assert (workdir / "loss_history.txt").exists()

    def test_plan_command(self, workdir, capsys):
        code = run(["plan", "--system", workdir / "system.cfg",
                    "--config", workdir / "conplan.cfg",
                    "--start", "0,0,0", "--goal", "0.4,0.2,-0.3",
                    "--time-limit", "2.0"])
        assert code == 0
        assert "success" in capsys.readouterr().out

    def test_bench_csv_and_outputs(self, workdir, capsys):
        code = run(["bench", "--system", workdir / "system.cfg",
                    "--config", workdir / "conplan.cfg",
                    "--model", workdir / "model.bin",
                    "--strategy", "random,joint-space,feature-space",
                    "--out", workdir / "bench1"])
        assert code == 0
        csv_text = (workdir / "bench1" / "bench.csv").read_text()
        header = csv_text.splitlines()[0]
        assert header == ("scene_id,strategy,success,planning_time_s,"
                          "start_idx,goal_idx,oracle_same_component")
        # 2 scenes x 3 strategies
        assert len(csv_text.splitlines()) == 1 + 2 * 3
        assert (workdir / "bench1" / "summary.txt").exists()
        assert (workdir / "bench1" / "success_rate.svg").exists()

    def test_bench_deterministic(self, workdir, capsys):
        for out in ("bench2", "bench3"):
            assert run(["bench", "--system", workdir / "system.cfg",
                        "--config", workdir / "conplan.cfg",
                        "--strategy", "random,joint-space",
                        "--out", workdir / out]) == 0
        a = (workdir / "bench2" / "bench.csv").read_bytes()
        b = (workdir / "bench3" / "bench.csv").read_bytes()
        assert a == b

    def test_swissroll_panels(self, workdir, capsys):
        code = run(["swissroll", "--n", "400", "--pieces", "2",
                    "--passage", "0.0",
                    "--scales", "5:0.1,10:0.1,15:0.2",
                    "--config", workdir / "conplan.cfg",
                    "--out", workdir / "roll"])
        assert code == 0
        svg = (workdir / "roll" / "swissroll.svg").read_text()
        assert svg.count('class="panel"') == 6  # 2 rows x 3 scales
