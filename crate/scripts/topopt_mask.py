"""Writes the 60 x 40 x 40 frame used as the topology-optimized input.

Left wall, two far columns, a centre column, a top plate with two openings and
diagonal braces from the far columns to the wall, about 0.2 volume fraction.
"""

import sys
from pathlib import Path

NX, NY, NZ = 60, 40, 40


def solid(i, j, k):
    x, y, z = i + 0.5, j + 0.5, k + 0.5
    if z > 36:
        return min((x - xc) ** 2 + (y - 20) ** 2 for xc in (16, 44)) > 9 ** 2
    if x < 3:
        return not (abs(y - 20) < 8 and 10 < z < 28)
    if 51 < x < 58 and (2 < y < 9 or 31 < y < 38):
        return True
    if 27 < x < 33 and 17 < y < 23:
        return True
    for yc in (5.5, 34.5):
        # brace from the foot of a far column up to the wall top
        t = (58 - x) / 55
        if 0 <= t <= 1 and abs(z - 36 * t) < 2.2 and abs(y - yc) < 2.2:
            return True
    return False


def main(path):
    cells = [[("1" if solid(i, j, k) else "0") for i in range(NX)] for k in range(NZ) for j in range(NY)]
    filled = sum(row.count("1") for row in cells)
    with open(path, "w") as f:
        f.write(f"{NX} {NY} {NZ} element\n")
        for row in cells:
            f.write(" ".join(row) + "\n")
    print(f"{path}: volume fraction {filled / (NX * NY * NZ):.4f}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent.parent / "data" / "topopt_60x40x40.txt")
