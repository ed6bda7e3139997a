import pytest

from eulerncl.config import Config, configured
from eulerncl.fixtures import (
    COMPONENTS,
    EXAMPLES,
    Example,
    FixtureError,
    Tag,
    TermDiff,
    assemble,
    components,
    computed_form,
    diff_report,
    find_fixture,
    fixture_diff,
    load_fixtures,
    parse_fixture_text,
    transcribed_closedness_report,
)
from eulerncl.kernel import GaussianRational
from eulerncl.onshell import Variant
from eulerncl.reports import Status
from eulerncl.varcalc import HorizontalForm2

TOY = Example("toy", Variant.D, None, {"dxdy": ("A", None), "T1": ("B", "s_x"), "T2": ("B", "mu")}, "toy")


class TestParseFixtureText:
    def test_lines(self, P):
        fixtures = parse_fixture_text("# header\n\ndxdy = u*x  # top\nT1 [representative] = u_y\n")
        assert [f.label for f in fixtures] == ["dxdy", "T1"]
        assert fixtures[0].expr == P("u*x")
        assert fixtures[0].anchor == "top"
        assert fixtures[0].line == 3
        assert fixtures[1].tag is Tag.REPRESENTATIVE
        assert fixtures[1].anchor == ""

    def test_unparsable_expression_is_kept(self):
        (fixture,) = parse_fixture_text("T1 = L(u_xx)")
        assert fixture.expr is None
        assert "unknown identifier" in str(fixture.error)

    @pytest.mark.parametrize(
        "text, fragment",
        [
            ("T1 = u\nT1 = x", "duplicate label T1"),
            ("T1 [maybe] = u", "unknown tag"),
            ("just words", "expected 'label"),
        ],
    )
    def test_malformed(self, text, fragment):
        with pytest.raises(FixtureError) as error:
            parse_fixture_text(text)
        assert fragment in str(error.value)


class TestLoadFixtures:
    def test_bundled(self):
        labels = [f.label for f in load_fixtures("ccl")]
        assert labels == ["dxdy", "K1", "K2"]

    def test_uncertain_lines(self):
        by_label = {f.label: f for f in load_fixtures("ex2")}
        assert by_label["M4_1"].tag is Tag.UNCERTAIN
        assert by_label["M4_1"].expr is None
        assert by_label["M1"].tag is Tag.EXACT

    def test_directory_override(self, tmp_path, P):
        (tmp_path / "ccl.txt").write_text("dxdy = q*p\n")
        with configured(Config(fixtures_dir=tmp_path)):
            (fixture,) = load_fixtures("ccl")
        assert fixture.expr == P("q*p")

    def test_missing_file(self, tmp_path):
        with configured(Config(fixtures_dir=tmp_path)):
            with pytest.raises(FixtureError):
                load_fixtures("ex1")

    def test_find_fixture(self):
        example, fixture = find_fixture("K1")
        assert example.name == "ccl"
        assert fixture.label == "K1"
        assert find_fixture("ex2") == (EXAMPLES["ex2"], None)
        with pytest.raises(KeyError):
            find_fixture("Z9")


class TestComponents:
    def test_split(self, P):
        parts = components(P("x*s_xx + u*s_x - s + lambda*u_y + 2*mu - eps*x + u^2"))
        assert list(parts) == list(COMPONENTS)
        assert parts["s_xx"] == P("x")
        assert parts["s_x"] == P("u")
        assert parts["s"] == P("-1")
        assert parts["lambda"] == P("u_y")
        assert parts["mu"] == P("2")
        assert parts["eps"] == P("-x")
        assert parts["1"] == P("u^2")

    def test_assemble(self, P):
        fixtures = parse_fixture_text("dxdy = u\nT1 = x\nT2 = y")
        omega = assemble(TOY, fixtures)
        assert omega.A == P("u")
        assert omega.B == P("x*s_x + mu*y")
        assert omega.C.is_zero()

    def test_assemble_unknown_label(self):
        with pytest.raises(FixtureError):
            assemble(TOY, parse_fixture_text("Q1 = u"))

    def test_assemble_skips_unparsed(self, P):
        omega = assemble(TOY, parse_fixture_text("dxdy = u\nT1 = foo"))
        assert omega.B.is_zero()


class TestFixtureDiff:
    def test_match(self, P):
        fixtures = parse_fixture_text("dxdy = u\nT1 = x\nT2 = y")
        computed = HorizontalForm2(P("u"), P("x*s_x + mu*y"), P("0"))
        diff = fixture_diff(computed, TOY, fixtures)
        assert diff.empty
        assert diff.to_report().status is Status.VERIFIED

    def test_localizes_mismatch(self, P):
        fixtures = parse_fixture_text("dxdy = u\nT1 = 3*x")
        computed = HorizontalForm2(P("u"), P("2*x*s_x + y*s_x"), P("0"))
        diff = fixture_diff(computed, TOY, fixtures)
        entry = diff.component("B", "s_x")
        assert entry.labels == ["T1"]
        assert entry.tag is Tag.EXACT
        assert entry.mismatched == [TermDiff("x", GaussianRational(2), GaussianRational(3))]
        assert entry.only_computed == [TermDiff("y", GaussianRational(1), None)]
        assert diff.for_label("T1") == [entry]
        report = diff.to_report()
        assert report.status is Status.FAILED
        assert "  mismatch: x: computed 2, fixture 3" in report.notes

    def test_parameter_components_are_asserted(self, P):
        fixtures = parse_fixture_text("dxdy = u\nT2 = y")
        computed = HorizontalForm2(P("u"), P("mu*x"), P("0"))
        diff = fixture_diff(computed, TOY, fixtures)
        assert diff.component("B", "mu").tag is Tag.EXACT
        assert not diff.asserted_empty
        assert diff.to_report().status is Status.FAILED

    def test_representative_lines_are_not_asserted(self, P):
        fixtures = parse_fixture_text("dxdy = u\nT2 [representative] = y")
        computed = HorizontalForm2(P("u"), P("mu*x"), P("0"))
        diff = fixture_diff(computed, TOY, fixtures)
        assert diff.component("B", "mu").tag is Tag.REPRESENTATIVE
        assert not diff.empty
        assert diff.asserted_empty

    def test_zero_whole_coefficient_is_compared(self, P):
        diff = fixture_diff(HorizontalForm2(P("0"), P("x*s_x"), P("0")), TOY, parse_fixture_text("dxdy = 0\nT1 = x"))
        entry = diff.component("A", "1")
        assert entry.labels == ["dxdy"]
        assert entry.tag is Tag.EXACT
        assert entry.empty
        assert "dx^dy[1] (dxdy, exact): match" in diff.to_report().notes

    def test_nonzero_computed_against_zero_line(self, P):
        diff = fixture_diff(HorizontalForm2(P("u*s"), P("0"), P("0")), TOY, parse_fixture_text("dxdy = 0"))
        assert diff.component("A", "s").only_computed == [TermDiff("u", GaussianRational(1), None)]
        assert not diff.asserted_empty

    def test_unparsed_line_is_uncertain(self, P):
        fixtures = parse_fixture_text("dxdy = u\nT1 = foo")
        computed = HorizontalForm2(P("u"), P("x*s_x"), P("0"))
        entry = fixture_diff(computed, TOY, fixtures).component("B", "s_x")
        assert entry.tag is Tag.UNCERTAIN
        assert entry.unparsed and entry.unparsed[0].startswith("T1:")

    def test_unknown_component(self, P):
        diff = fixture_diff(HorizontalForm2(P("u"), P("0"), P("0")), TOY, parse_fixture_text("dxdy = u"))
        with pytest.raises(KeyError):
            diff.component("C", "s")


class TestDiffReports:
    @pytest.mark.parametrize("name", ["ccl", "ccl_laplace"])
    def test_canonical_laws_match(self, name):
        report = diff_report(name)
        assert report.ok, report.notes
        assert report.claim_id == f"fixture-diff[{name}]"

    def test_second_example_eps_coefficient_differs(self):
        example = EXAMPLES["ex2"]
        diff = fixture_diff(computed_form(example), example, load_fixtures("ex2"))
        eps = diff.component("B", "eps")
        assert eps.labels == ["M4_3"]
        assert eps.tag is Tag.EXACT
        # the A1'(t) terms of M4_3 are printed with the opposite sign
        assert any(term.computed == -term.fixture for term in eps.mismatched)
        assert diff_report("ex2").status is Status.FAILED

    def test_second_example_other_components(self):
        example = EXAMPLES["ex2"]
        diff = fixture_diff(computed_form(example), example, load_fixtures("ex2"))
        for basis in ("B", "C"):
            for component in ("s_xx", "s_x", "s"):
                assert diff.component(basis, component).empty, (basis, component)
        assert diff.component("B", "lambda").tag is Tag.UNCERTAIN
        assert diff.component("B", "mu").tag is Tag.UNCERTAIN
        zero = diff.component("A", "1")
        assert zero.labels == ["dxdy"]
        assert zero.empty

    @pytest.mark.slow
    def test_first_example_fiber_part_of_dxdy(self):
        example = EXAMPLES["ex1"]
        diff = fixture_diff(computed_form(example), example, load_fixtures("ex1"))
        assert diff.component("A", "s").empty
        lam = diff.component("A", "lambda")
        assert lam.tag is Tag.EXACT
        assert lam.only_computed and not lam.only_fixture

    @pytest.mark.slow
    def test_first_example_transcription_not_closed_is_explained(self):
        report = transcribed_closedness_report("ex1")
        assert report.claim_id == "transcribed-closed[ex1]"
        assert report.status is Status.VERIFIED
        assert report.notes[0].startswith("transcribed-closed[ex1]:as-transcribed failed as expected")
        assert any(note.startswith("dx^dy[lambda] (dxdy, exact)") for note in report.notes[1:])

    def test_closed_transcription_is_reported_as_is(self, tmp_path):
        (tmp_path / "ex2.txt").write_text("dxdy = 0\n")
        with configured(Config(fixtures_dir=tmp_path)):
            report = transcribed_closedness_report("ex2")
        assert report.claim_id == "transcribed-closed[ex2]"
        assert report.ok
