"""Reads VTU files written by the solver with VTK's own XML reader.

usage: vtu_reader_test.py <sbfem executable> <fixture dir> <work dir>
"""

import pathlib
import subprocess
import sys

import vtk
from vtk.util.numpy_support import vtk_to_numpy


class Messages:
    """Collects warnings and errors raised while reading."""

    def __init__(self):
        self.seen = []

    def __call__(self, obj, event):
        self.seen.append(event)


def read(path):
    messages = Messages()
    reader = vtk.vtkXMLUnstructuredGridReader()
    reader.AddObserver("WarningEvent", messages)
    reader.AddObserver("ErrorEvent", messages)
    reader.SetFileName(str(path))
    reader.Update()
    assert not messages.seen, f"{path}: reader reported {messages.seen}"
    return reader.GetOutput()


def solve(exe, work, name, mesh, body):
    job = work / f"{name}.inp"
    job.write_text(f"*MESH\n{mesh}\n*MATERIAL, NAME=M\n10e9, 0.25, 2400\n{body}"
                   f"*OUTPUT\nVTU, {name}.vtu\n")
    subprocess.run([str(exe), "solve", str(job)], check=True, capture_output=True)
    return read(work / f"{name}.vtu")


def cell_volumes(grid):
    sizes = vtk.vtkCellSizeFilter()
    sizes.SetInputData(grid)
    sizes.ComputeVolumeOn()
    sizes.Update()
    return vtk_to_numpy(sizes.GetOutput().GetCellData().GetArray("Volume"))


def main():
    exe, fixtures, work = (pathlib.Path(a).resolve() for a in sys.argv[1:4])
    work.mkdir(parents=True, exist_ok=True)
    failures = []

    def check(label, ok):
        print(("PASS " if ok else "FAIL ") + label)
        if not ok:
            failures.append(label)

    two = solve(exe, work, "two_elements", fixtures / "two_elements.txt",
                "*NSET, NAME=BASE, BOX\n-1, -1, -0.1, 2, 2, 0.1\n*BOUNDARY\nBASE, ENCASTRE\n"
                "*CLOAD\n10, 3, -1000\n*STEP\nSTATIC\n")
    check("two elements: 11 points", two.GetNumberOfPoints() == 11)
    check("two elements: 2 cells", two.GetNumberOfCells() == 2)
    check("two elements: polyhedron cells",
          all(two.GetCellType(i) == vtk.VTK_POLYHEDRON for i in range(two.GetNumberOfCells())))
    check("two elements: unit cube volume", abs(cell_volumes(two)[0] - 1.0) < 1e-12)
    u = vtk_to_numpy(two.GetPointData().GetArray("displacement"))
    check("two elements: displacement field", u.shape == (11, 3) and abs(u[:4]).max() == 0.0)

    patch = solve(exe, work, "patch", fixtures / "prism_patch.txt",
                  "*NSET, NAME=BASE, BOX\n-0.1, -0.1, -1e-6, 1.1, 1.1, 1e-6\n*SURFACE, NAME=TOP\n21\n"
                  "*BOUNDARY\nBASE, ZSYMM\n1, 1, 2\n3, 2, 2\n*DLOAD\nTOP, 0, 0, 1e6\n*STEP\nSTATIC\n")
    # Warped faces are triangulated by VTK, so only the sign of the volume is exact.
    check("prism: positive cell volumes", (cell_volumes(patch) > 0).all())
    stress = vtk_to_numpy(patch.GetPointData().GetArray("stress"))
    check("prism: sigma_z = 1 MPa", abs(stress[:, 2] - 1e6).max() < 1e-10 * 1e6)

    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
