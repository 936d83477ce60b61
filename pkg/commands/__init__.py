from commands import bounds, eigen, heat_eq, rate, simulate, verify

# Sub-command name -> module exposing add_parser(subparsers)
COMMANDS = {
    "rate": rate,
    "bounds": bounds,
    "simulate": simulate,
    "eigen": eigen,
    "verify": verify,
    "heat-eq": heat_eq,
}
