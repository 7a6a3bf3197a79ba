#include <cstdio>

int main() {
  std::puts("geofuse: CLI not wired up yet");
  return 0;
}
