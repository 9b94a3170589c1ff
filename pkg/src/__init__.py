# microcc numerical laboratory source package
