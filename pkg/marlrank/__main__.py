from marlrank.main import main

main()
