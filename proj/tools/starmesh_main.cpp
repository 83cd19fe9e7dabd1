#include <cstdio>
int main() { std::puts("starmesh cli stub"); return 0; }
