from metrocover.cli import main

main()
