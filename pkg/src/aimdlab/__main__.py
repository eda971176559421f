from aimdlab.cli import main

main()
