#include <cstdio>

int main() {
  std::puts("vdst: command-line interface under construction");
  return 0;
}
