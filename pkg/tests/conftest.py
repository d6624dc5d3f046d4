import pathlib

import pytest

from dadl.model import DadlDocument, parse_document

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


def load_fixture(name: str) -> str:
    return (FIXTURES / name).read_text()


def parse_fixture(name: str) -> DadlDocument:
    return parse_document(load_fixture(name))


@pytest.fixture
def minimal_doc() -> DadlDocument:
    return parse_fixture("minimal.dadl")


@pytest.fixture
def devices_doc() -> DadlDocument:
    return parse_fixture("devices.dadl")


@pytest.fixture
def hackernews_doc() -> DadlDocument:
    return parse_fixture("hackernews.dadl")


@pytest.fixture
def issues_doc() -> DadlDocument:
    return parse_fixture("issues.dadl")


@pytest.fixture
def search_doc() -> DadlDocument:
    return parse_fixture("search-service.dadl")
