#include <cstdio>

int main() {
  std::puts("egfs-loc: placeholder");
  return 0;
}
