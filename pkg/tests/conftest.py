"""Shared fixtures: synthetic Linux-style corpora and engine builders."""

import random
from importlib import resources

import pytest

from logrouter.config import ServiceConfig, build_engine
from logrouter.evaluation import TickClock, seeded_trace_factory
from logrouter.ingest import SourceDescriptor

SERVICES = ("sshd", "crond", "su", "ftpd", "kernel", "smartd", "proxy")
IPS = ("218.188.2.4", "82.53.10.9", "61.74.88.12", "10.12.0.7", "193.110.95.3")
USERS = ("root", "guest", "test", "admin", "cyrus", "news")


def make_linux_corpus(n: int, seed: int = 0) -> list[str]:
    """Deterministic Linux-syslog-shaped lines (LogHub-style shapes)."""
    rng = random.Random(seed)
    shapes = [
        lambda: f"sshd(pam_unix)[{rng.randint(1000, 32000)}]: authentication failure; "
        f"logname= uid=0 euid=0 tty=NODEVssh ruser= rhost={rng.choice(IPS)}  user={rng.choice(USERS)}",
        lambda: f"sshd[{rng.randint(1000, 32000)}]: Accepted password for {rng.choice(USERS)} "
        f"from {rng.choice(IPS)} port {rng.randint(1024, 65000)} ssh2",
        lambda: f"crond(pam_unix)[{rng.randint(1000, 32000)}]: session opened for user root",
        lambda: f"crond(pam_unix)[{rng.randint(1000, 32000)}]: session closed for user root",
        lambda: f"su(pam_unix)[{rng.randint(1000, 32000)}]: session opened for user cyrus by (uid=0)",
        lambda: f"ftpd[{rng.randint(1000, 32000)}]: connection from {rng.choice(IPS)} ()",
        lambda: f"kernel: usb {rng.randint(1, 4)}-{rng.randint(1, 4)}: new high speed USB device "
        f"using address {rng.randint(2, 63)}",
        lambda: f"kernel: EXT4-fs error (device sda{rng.randint(1, 4)}): reading directory lblock {rng.randint(0, 8)}",
        lambda: f"logrotate: ALERT exited abnormally with [{rng.randint(1, 2)}]",
    ]
    lines = []
    for i in range(n):
        day = 14 + (i * 2) // max(n, 1)
        hour, minute, sec = rng.randint(0, 23), rng.randint(0, 59), rng.randint(0, 59)
        body = rng.choice(shapes)()
        lines.append(f"Jun {day:2d} {hour:02d}:{minute:02d}:{sec:02d} combo {body}")
    return lines


@pytest.fixture(scope="session")
def sample_corpus_path() -> str:
    return str(resources.files("logrouter.data").joinpath("sample_linux.log"))


@pytest.fixture(scope="session")
def mini_questions_path() -> str:
    return str(resources.files("logrouter.data").joinpath("questions_mini.jsonl"))


def build_deterministic_engine(seed: int = 0, **overrides):
    cfg = ServiceConfig(**overrides)
    return build_engine(cfg, clock=TickClock(), trace_id_factory=seeded_trace_factory(seed))


@pytest.fixture
def engine(sample_corpus_path):
    eng = build_deterministic_engine()
    eng.ingest_file(sample_corpus_path, SourceDescriptor(dataset="sample_linux"))
    return eng


@pytest.fixture
def empty_engine():
    return build_deterministic_engine()
