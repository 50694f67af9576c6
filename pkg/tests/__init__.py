# Space-time Ising test suite
