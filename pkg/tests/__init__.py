# Mark the tests directory as a package
