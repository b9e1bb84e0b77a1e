"""Brute-force density-connectivity reference for one-dimensional DBSCAN."""


def check_dbscan(points, eps, min_pts, ids):
    """Return a list of violations of ``ids`` against the DBSCAN definition."""
    n = len(points)
    near = [[j for j in range(n) if abs(points[i] - points[j]) <= eps] for i in range(n)]
    core = [len(near[i]) >= min_pts for i in range(n)]
    # connected components of the core graph
    comp = [None] * n
    c = 0
    for i in range(n):
        if core[i] and comp[i] is None:
            stack = [i]
            comp[i] = c
            while stack:
                k = stack.pop()
                for j in near[k]:
                    if core[j] and comp[j] is None:
                        comp[j] = c
                        stack.append(j)
            c += 1
    problems = []
    label_of = {}
    for i in range(n):
        if core[i]:
            if ids[i] < 0:
                problems.append(f"core point {i} labelled noise")
                continue
            if label_of.setdefault(comp[i], ids[i]) != ids[i]:
                problems.append(f"component {comp[i]} split")
        else:
            reachable = {comp[j] for j in near[i] if core[j]}
            if not reachable and ids[i] != -1:
                problems.append(f"unreachable point {i} not noise")
            if reachable and ids[i] == -1:
                problems.append(f"border point {i} labelled noise")
    if len(set(label_of.values())) != len(label_of):
        problems.append("two components share an id")
    return problems


def border_check(points, eps, min_pts, ids):
    """Indices of border points placed in a cluster none of whose cores reach them."""
    n = len(points)
    near = [[j for j in range(n) if abs(points[i] - points[j]) <= eps] for i in range(n)]
    core = [len(near[i]) >= min_pts for i in range(n)]
    bad = []
    for i in range(n):
        if not core[i] and ids[i] != -1:
            if ids[i] not in {ids[j] for j in near[i] if core[j]}:
                bad.append(i)
    return bad
