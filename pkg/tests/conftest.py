import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from newsrag.core import Document, RecordingMetadata  # noqa: E402
from stubs import ScriptedChat, StubServer  # noqa: E402

DATA = Path(__file__).parent / "data"
T0 = datetime(2016, 1, 1, tzinfo=timezone.utc)


def make_meta(recording_id="r1", language="en", source="CNN", duration=0.0, start=T0, end=None, **kw):
    return RecordingMetadata(
        recording_id=recording_id,
        language=language,
        source=source,
        duration_s=duration,
        start_time=start,
        end_time=end or start,
        **kw,
    )


def make_doc(text, doc_id="d1", **kw):
    return Document(doc_id, text, make_meta(recording_id=doc_id, **kw))


@pytest.fixture
def corpus_dir():
    return DATA / "corpus"


@pytest.fixture
def stub_script():
    return json.loads((DATA / "stub_script.json").read_text())


@pytest.fixture
def scripted_llm(stub_script):
    chat = ScriptedChat(stub_script["answers"], stub_script["default"])
    with StubServer(chat=chat) as server:
        server.chat = chat
        yield server


@pytest.fixture
def echo_llm():
    chat = ScriptedChat({}, echo=True)
    with StubServer(chat=chat) as server:
        server.chat = chat
        yield server


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in results:
        terminalreporter.write_line(f"{status}  {name}  ({detail})")
