// Runs every acceptance criterion; the exit status is the verdict.

#include "indexlab/acceptance.hpp"

int main() { return indexlab::acceptance::run({}); }
