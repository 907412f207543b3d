# Tests Package
