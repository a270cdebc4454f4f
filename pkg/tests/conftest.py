from hypothesis import settings

# first calls pay numba's cache load; wall-clock deadlines only add flakiness
settings.register_profile("levsplit", deadline=None)
settings.load_profile("levsplit")


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, with the measured numbers."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            for key, value in rep.user_properties:
                if key == "acceptance":
                    lines.append((value[0], f"{outcome.upper()[:4]:4s}  criterion {value[0]:2d}: {value[1]}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
