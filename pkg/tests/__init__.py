# Tests package for microcc
