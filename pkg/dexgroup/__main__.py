from dexgroup.cli import main

main()
