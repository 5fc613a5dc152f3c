import pytest

from conftest import DATASETS, FIXTURES, dataset_net, fixture_net
from metrocover.ingest import (SpecError, canonical_serialize, load_network, network_from_text,
                               parse_network_file, validate_spec)


class TestParse:
    def test_minimal_file(self):
        spec = parse_network_file("station A\nstation B\nline L1\nsegment L1 A B")
        assert [s.name for s in spec.stations] == ["A", "B"]
        assert spec.lines == ["L1"]
        assert len(spec.segments) == 1
        assert spec.segments[0].oneway is False

    def test_oneway_flag(self):
        spec = parse_network_file("station A\nstation B\nline L1\nsegment L1 A B oneway")
        seg = spec.segments[0]
        assert (seg.a, seg.b, seg.oneway) == ("A", "B", True)

    def test_quoted_names_and_comments(self):
        spec = parse_network_file('# header\nstation "Gare du Nord" 48.88 2.355  # trailing\n'
                                  'station "La Chapelle"\nline 2\n'
                                  'segment 2 "Gare du Nord" "La Chapelle"\n')
        assert spec.stations[0].name == "Gare du Nord"
        assert spec.stations[0].lat == pytest.approx(48.88)
        assert spec.segments[0].b == "La Chapelle"

    def test_metadata_lines(self):
        spec = parse_network_file("#: name: demo\n#: source: hand made\nstation A\n")
        assert spec.metadata == {"name": "demo", "source": "hand made"}
        assert spec.name == "demo"

    def test_line_numbers_are_kept(self):
        spec = parse_network_file("station A\n\nstation B\nline L\nsegment L A B\n")
        assert spec.segments[0].lineno == 5

    @pytest.mark.parametrize("text, needle", [
        ("teleport A B", "unknown directive"),
        ('station "A', "unterminated"),
        ("station A x 2", "latitude"),
        ("station A 91 2", "out of range"),
        ("station A B C D", "station"),
        ("line", "line"),
        ("station A\nstation B\nline L\nsegment L A B twoway", "oneway"),
        ("corridor A", "corridor"),
    ])
    def test_syntax_errors_name_the_line(self, text, needle):
        with pytest.raises(SpecError, match=needle) as exc:
            parse_network_file(text)
        assert "line " in str(exc.value)

    def test_tokyo_merges_two_operators(self):
        text = (DATASETS / "tokyo.txt").read_text(encoding="utf-8")
        spec = parse_network_file(text)
        assert len(spec.lines) == 13
        net = dataset_net("tokyo")
        assert len(net.lines) == 13
        # both operators' lines live in one connected graph
        seen, todo = set(), [min(net.stations)]
        while todo:
            v = todo.pop()
            if v not in seen:
                seen.add(v)
                todo.extend(net.neighbors(v))
        assert seen == set(net.stations)


class TestValidate:
    def test_valid_triangle(self):
        text = (FIXTURES / "triangle.txt").read_text()
        assert validate_spec(parse_network_file(text)) == []

    def test_undeclared_station_is_one_error_naming_it(self):
        spec = parse_network_file("station A\nline L1\nsegment L1 A Q\n", strict=False)
        diags = validate_spec(spec)
        errors = [d for d in diags if d.level == "error"]
        assert len(errors) == 1
        assert "Q" in errors[0].message and errors[0].lineno == 3

    def test_unused_line_is_one_warning(self):
        spec = parse_network_file("station A\nstation B\nline L1\nline L2\nsegment L1 A B\n")
        diags = validate_spec(spec)
        assert len(diags) == 1
        assert diags[0].level == "warning" and "L2" in diags[0].message

    def test_isolated_station_warns(self):
        diags = validate_spec(parse_network_file("station A\nstation B\nstation C\nline L\nsegment L A B\n"))
        assert [d.level for d in diags] == ["warning"]
        assert "C" in diags[0].message

    def test_strict_parse_rejects_what_validate_flags(self):
        text = "station A\nline L1\nsegment L1 A Q\n"
        with pytest.raises(SpecError) as exc:
            parse_network_file(text)
        assert len(exc.value.diagnostics) == 1

    def test_warnings_never_block(self):
        parse_network_file("station A\nstation B\nline L1\nline L2\nsegment L1 A B\n")

    @pytest.mark.parametrize("text", [
        "station A\nstation A\n",
        "station A\nstation B\nline L\nline L\nsegment L A B\n",
        "station A\nstation B\nline L\nsegment L A B\nsegment L B A\n",
        "station A\nstation B\nline L\nsegment L A A\n",
        "station A\nline L\nsegment L A B\nstation B\n",
        "station A\nstation B\nsegment L A B\nline L\n",
        "station <source>\n",
        "station A\nstation B\nline <walkway>\nsegment <walkway> A B\n",
        "station A\ncorridor A Z\n",
    ])
    def test_error_cases(self, text):
        spec = parse_network_file(text, strict=False)
        assert any(d.level == "error" for d in validate_spec(spec))
        with pytest.raises(SpecError):
            parse_network_file(text)

    def test_opposite_oneways_are_not_duplicates(self):
        spec = parse_network_file("station A\nstation B\nline L\nsegment L A B oneway\nsegment L B A oneway\n")
        assert validate_spec(spec) == []


class TestSerialize:
    def test_round_trip_path2(self):
        net = fixture_net("path2")
        again = network_from_text(canonical_serialize(net))
        assert again == net

    def test_permutations_serialize_identically(self):
        a = "station A\nstation B\nstation C\nline L1\nline L2\nsegment L1 A B\nsegment L2 B C oneway\n"
        b = "station C\nline L2\nstation B\nstation A\nline L1\nsegment L2 B C oneway\nsegment L1 B A\n"
        assert canonical_serialize(network_from_text(a)) == canonical_serialize(network_from_text(b))

    def test_rer_dataset_declares_21_lines(self):
        text = canonical_serialize(dataset_net("paris-metro-rer"))
        assert sum(1 for ln in text.splitlines() if ln.startswith("line ")) == 21

    def test_quoting_survives(self):
        net = network_from_text('station "a b"\nstation "q\\"x"\nstation oneway2\nline "L 1"\n'
                                'segment "L 1" "a b" "q\\"x"\nsegment "L 1" "q\\"x" oneway2 oneway\n')
        assert network_from_text(canonical_serialize(net)) == net

    def test_corridors_survive_in_both_modes(self):
        for mode in ("merge", "walk"):
            net = fixture_net("corridor", corridors=mode)
            text = canonical_serialize(net)
            assert "corridor P Q" in text
            assert network_from_text(text, corridors=mode) == net

    def test_coordinates_survive(self):
        net = network_from_text("station A 48.5 2.25\nstation B 48.75 2.5\nline L\nsegment L A B\n")
        again = network_from_text(canonical_serialize(net))
        assert again.coordinate("A") == (48.5, 2.25)

    def test_datasets_round_trip(self):
        for path in sorted(DATASETS.glob("*.txt")):
            net = load_network(path)
            assert network_from_text(canonical_serialize(net)) == net, path.name

    def test_dataset_metadata_names_a_source(self):
        for path in sorted(DATASETS.glob("*.txt")):
            spec = parse_network_file(path.read_text(encoding="utf-8"))
            assert spec.metadata.get("source"), path.name
