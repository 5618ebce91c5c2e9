import pytest

from app.storage import RunStore
from app.utils.errors import InputValidationError


def test_named_run_lives_under_store_root(tmp_path):
    store = RunStore(tmp_path / "runs")
    run_dir = store.create_run("basin-a_2024.1")
    assert run_dir == tmp_path / "runs" / "basin-a_2024.1"
    assert run_dir.is_dir()


def test_generated_run_id_is_accepted(tmp_path):
    run_dir = RunStore(tmp_path).create_run()
    assert run_dir.parent == tmp_path


@pytest.mark.parametrize("run_id", ["../escape", "a/b", "..", ".hidden", "", "/abs"])
def test_run_id_must_be_a_single_component(tmp_path, run_id):
    store = RunStore(tmp_path / "runs")
    with pytest.raises(InputValidationError):
        store.create_run(run_id)
    assert not (tmp_path / "escape").exists()
    with pytest.raises(FileNotFoundError):
        store.run_path(run_id)


def test_stored_run_is_found(stored_run):
    store, run_dir = stored_run
    assert store.run_path("demo") == run_dir
    assert [r["run_id"] for r in store.list_runs()] == ["demo"]
