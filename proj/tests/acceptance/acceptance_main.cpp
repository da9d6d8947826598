#include <cstdio>
#include <iostream>

#include "acceptance/criteria.hpp"

int main() {
  mest::acceptance::Suite suite;
  int failed = 0;
  suite.run([&](const mest::acceptance::Outcome& o) {
    std::cout << mest::acceptance::format_line(o) << std::endl;
    if (!o.pass) ++failed;
  });
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
