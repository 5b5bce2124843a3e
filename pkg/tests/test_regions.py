import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bubblesim.fields import AIR, LIQUID, SOLID, StaggeredGrid
from bubblesim.projection import PhysicsParams, assemble_reduced_system
from bubblesim.regions import (
    MaterialMap,
    bubble_liquid_area,
    build_material_map,
    find_enclosure_groups,
    label_bubbles,
    prune_constraints,
)
from helpers import geometry_from_labels, labels_from_rows, phi_from_labels
from oracles import same_partition, union_find_labels

label_maps = st.integers(0, 2**32 - 1).map(
    lambda s: np.random.default_rng(s).choice([SOLID, LIQUID, AIR], size=(16, 16)).astype(np.int8))


def material_map(rows, dx=1.0, open_sides=(), seeds=(), enabled=True):
    lab = labels_from_rows(rows)
    grid = StaggeredGrid(lab.shape[0], lab.shape[1], dx)
    geom = geometry_from_labels(grid, lab, phi_from_labels(lab, dx))
    mmap, groups = build_material_map(grid, lab, geom, open_sides, seeds, enabled)
    return grid, lab, geom, mmap, groups


class TestLabelBubbles:
    def test_all_liquid(self):
        _, n = label_bubbles(np.full((5, 5), LIQUID))
        assert n == 0

    def test_diagonal_cells_are_separate(self):
        lab = labels_from_rows(["~.~", ".~~", "~~~"])
        ids, n = label_bubbles(lab)
        assert n == 2
        assert ids[0, 1] != ids[1, 2]

    def test_annulus_and_hole(self):
        lab = labels_from_rows([
            ".......",
            ".~~~~~.",
            ".~~~~~.",
            ".~~.~~.",
            ".~~~~~.",
            ".~~~~~.",
            ".......",
        ])
        ids, n = label_bubbles(lab)
        assert n == 2
        assert ids[3, 3] != ids[0, 0]
        assert same_partition(ids, union_find_labels(lab == AIR))

    @settings(max_examples=40, deadline=None)
    @given(label_maps)
    def test_matches_union_find(self, lab):
        ids, n = label_bubbles(lab)
        assert same_partition(ids, union_find_labels(lab == AIR))
        assert np.all((ids >= 0) == (lab == AIR))
        assert n == len(np.unique(ids[ids >= 0]))

    @settings(max_examples=20, deadline=None)
    @given(label_maps)
    def test_invariant_to_visitation_order(self, lab):
        ids, _ = label_bubbles(lab)
        flipped, _ = label_bubbles(lab[::-1, ::-1].copy())
        assert same_partition(ids, flipped[::-1, ::-1])
        transposed, _ = label_bubbles(lab.T.copy())
        assert same_partition(ids, transposed.T)


class TestEnclosureGroups:
    def test_closed_pool_with_bubble(self):
        lab = labels_from_rows(["~~~~", "~..~", "~~~~"])
        ids, _ = label_bubbles(lab)
        groups = find_enclosure_groups(lab, (), ids)
        assert len(groups) == 1
        assert groups[0].enclosed and groups[0].bubbles == [0]

    def test_full_wall_splits(self):
        lab = labels_from_rows(["~#.", "~#~", "~#~"])
        assert len(find_enclosure_groups(lab)) == 2

    def test_open_top(self):
        lab = labels_from_rows(["...", "~#~", "~#~"])
        groups = find_enclosure_groups(lab, ("top",))
        assert len(groups) == 1 and not groups[0].enclosed
        assert find_enclosure_groups(lab, ("bottom",))[0].enclosed is False

    @settings(max_examples=30, deadline=None)
    @given(label_maps)
    def test_groups_partition_non_solid_cells(self, lab):
        groups = find_enclosure_groups(lab)
        cells = np.concatenate([g.cells for g in groups]) if groups else np.array([], dtype=int)
        assert len(cells) == len(np.unique(cells))
        assert set(cells.tolist()) == set(np.flatnonzero(lab.ravel() != SOLID).tolist())


class TestPrune:
    def test_enclosed_single_bubble_is_free(self):
        _, _, _, mmap, _ = material_map(["~~~~", "~..~", "~~~~"])
        assert mmap.n_active == 0

    def test_larger_liquid_area_is_dropped(self):
        lab = labels_from_rows(["~~~~~~", "~..~.~", "~~~~~~"])
        ids, n = label_bubbles(lab)
        mmap = MaterialMap(lab, ids, n, liquid_area=np.array([10.0, 4.0]))
        active = prune_constraints(mmap, find_enclosure_groups(lab, (), ids))
        assert active.tolist() == [False, True]

    def test_tie_breaks_on_lowest_id(self):
        lab = labels_from_rows(["~~~~~~", "~.~~.~", "~~~~~~"])
        ids, n = label_bubbles(lab)
        mmap = MaterialMap(lab, ids, n, liquid_area=np.array([4.0, 4.0]))
        active = prune_constraints(mmap, find_enclosure_groups(lab, (), ids))
        assert active.tolist() == [False, True]

    def test_open_top_with_seed(self):
        rows = ["......", "~~~~~~", "~~.~~~", "~~~~~~"]
        grid, lab, _, mmap, _ = material_map(rows, open_sides=("top",), seeds=[(0.5, 3.5)])
        assert mmap.n_bubbles == 2
        submerged = mmap.bubble_id[2, 1]
        assert mmap.active[submerged] and mmap.n_active == 1

    def test_disabled(self):
        _, _, _, mmap, _ = material_map(["~~~~~~", "~..~.~", "~~~~~~"], enabled=False)
        assert mmap.n_bubbles == 2 and mmap.n_active == 0

    @settings(max_examples=40, deadline=None)
    @given(label_maps)
    def test_enclosed_group_keeps_n_minus_one(self, lab):
        grid = StaggeredGrid(16, 16, 1.0 / 16)
        geom = geometry_from_labels(grid, lab, phi_from_labels(lab, grid.dx))
        mmap, groups = build_material_map(grid, lab, geom)
        for g in groups:
            n_active = int(np.count_nonzero(mmap.active[g.bubbles])) if g.bubbles else 0
            assert n_active == max(len(g.bubbles) - 1, 0)


class TestLiquidArea:
    def test_single_air_cell(self):
        grid, _, geom, mmap, _ = material_map(["~~~", "~.~", "~~~"])
        assert bubble_liquid_area(mmap, geom, grid.dx)[0] == pytest.approx(4.0)

    def test_half_solid_face(self):
        grid, _, geom, mmap, _ = material_map(["~~~", "~.~", "~~~"])
        geom.w_u[1, 1] = 0.5
        assert bubble_liquid_area(mmap, geom, grid.dx)[0] == pytest.approx(3.5)

    def test_solid_corner(self):
        grid, _, geom, mmap, _ = material_map(["~~~", ".~~", "#~~"])
        # The air cell at (0, 1) touches the domain wall on the left and liquid on
        # two faces; the cell below is solid.
        assert bubble_liquid_area(mmap, geom, grid.dx)[0] == pytest.approx(2.0)


class TestNullSpace:
    rows = ["~~~~~~", "~..~~~", "~~~~.~", "~~~~~~"]

    def _system(self, all_active):
        grid, lab, geom, mmap, _ = material_map(self.rows, dx=0.25)
        if all_active:
            mmap.active[:] = True
        params = PhysicsParams(1000.0, (0.0, -9.81), 0.0, 0.01)
        return mmap, assemble_reduced_system(grid, np.zeros(grid.n_faces), mmap, geom, params)

    def test_all_active_has_constant_null_vector(self):
        mmap, system = self._system(True)
        A = system.A.to_dense()
        ones = np.ones(system.size)
        assert np.linalg.norm(A @ ones) <= 1e-12 * np.abs(A).max() * mmap.n_bubbles
        assert system.floating_components == 1

    def test_pruned_system_is_positive_definite(self):
        mmap, system = self._system(False)
        assert mmap.n_active == mmap.n_bubbles - 1
        assert np.linalg.eigvalsh(system.A.to_dense()).min() > 0
        # The bubble with more liquid contact is the one left unconstrained.
        assert not mmap.active[int(np.argmax(mmap.liquid_area))]
