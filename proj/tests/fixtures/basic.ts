# two records, two dimensions, length three
@problemName Basic
@timeStamps false
@missing false
@univariate false
@dimensions 2
@equalLength true
@seriesLength 3
@classLabel true a b
@data
1.0,2.0,3.0:4.0,5.0,6.0:b
-1.5,0.25,7.0:0.0,0.0,1e-3:a
